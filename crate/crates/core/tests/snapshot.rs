use std::io::Cursor;
use std::sync::Arc;

use kahler_lab::make_model;
use kahler_lab::model::{ModelGeometry, ModelKind};
use kahler_lab::sample::{random_potential, rng, SampleSpec};
use kahler_lab::snapshot::{read, read_file, write, write_file, Descriptor, MAGIC};
use kahler_lab::Error;
use proptest::prelude::*;

fn bytes(p: &kahler_lab::Potential) -> Vec<u8> {
    let mut out = Vec::new();
    write(&mut out, p).unwrap();
    out
}

#[test]
fn header_lines() {
    let m = make_model(ModelKind::P1Symmetric, 64, 12.0).unwrap();
    let text = String::from_utf8(bytes(&m.zero())).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(MAGIC));
    let d = Descriptor::parse(lines.next().unwrap()).unwrap();
    assert_eq!(d, Descriptor::of(&m));
    assert_eq!(lines.count(), 65);
}

#[test]
fn model_is_rebuilt_from_the_descriptor() {
    let m = Arc::new(ModelGeometry::new(ModelKind::Torus2, 16, 0.0).unwrap().with_scale(2.5).unwrap().with_mu(-1.0));
    let p = random_potential(&m, &mut rng(1), &SampleSpec::default());
    let q = read(Cursor::new(bytes(&p)), None).unwrap();
    assert_eq!(Descriptor::of(q.model()), Descriptor::of(&m));
    assert_eq!(q.samples(), p.samples());
}

#[test]
fn descriptor_mismatch_is_an_error() {
    let t = make_model(ModelKind::Torus2, 16, 0.0).unwrap();
    let s = make_model(ModelKind::P1Symmetric, 64, 12.0).unwrap();
    let data = bytes(&t.zero());
    assert!(matches!(read(Cursor::new(&data), Some(&s)), Err(Error::ModelMismatch(_))));
    let s2 = make_model(ModelKind::P1Symmetric, 64, 16.0).unwrap();
    assert!(matches!(read(Cursor::new(bytes(&s.zero())), Some(&s2)), Err(Error::ModelMismatch(_))));
}

#[test]
fn malformed_files_are_rejected() {
    let m = make_model(ModelKind::P1Symmetric, 16, 12.0).unwrap();
    let good = String::from_utf8(bytes(&m.zero())).unwrap();
    let cases = [
        good.replacen(MAGIC, "KLAB0", 1),
        good.lines().take(10).collect::<Vec<_>>().join("\n"),
        format!("{good}0\n"),
        good.replacen("0.0000000000000000e0\n", "zero\n", 1),
        format!("{MAGIC}\np1 16 12\n"),
        String::new(),
    ];
    for c in cases {
        assert!(matches!(read(Cursor::new(c.clone()), None), Err(Error::Snapshot(_))), "{c:?}");
    }
}

#[test]
fn file_round_trip() {
    let dir = std::env::temp_dir().join(format!("klab-snap-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("p.klab");
    let m = make_model(ModelKind::P1Symmetric, 128, 12.0).unwrap();
    let p = random_potential(&m, &mut rng(2), &SampleSpec::default());
    write_file(&path, &p).unwrap();
    let q = read_file(&path, Some(&m)).unwrap();
    assert_eq!(q.samples(), p.samples());
    assert!(Arc::ptr_eq(q.model(), &m));
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_is_exact(seed in any::<u64>(), sphere in any::<bool>()) {
        let m = if sphere { make_model(ModelKind::P1Symmetric, 64, 12.0).unwrap() } else { make_model(ModelKind::Torus2, 12, 0.0).unwrap() };
        let p = random_potential(&m, &mut rng(seed), &SampleSpec::default());
        let q = read(Cursor::new(bytes(&p)), Some(&m)).unwrap();
        prop_assert_eq!(q.samples(), p.samples());
        prop_assert_eq!(bytes(&q), bytes(&p));
    }
}
