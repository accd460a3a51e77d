mod common;

use std::fs;

use srattack::sr::{encode_weights, forward, load_weights, write_weights};
use srattack::Error;

#[test]
fn file_round_trip_preserves_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.srw");
    for k in 2..=4 {
        let model = common::random_model(&mut common::rng(u64::from(k)), k, 4, 2);
        write_weights(&model, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(fs::read(&path).unwrap(), encode_weights(&model));
        let img = common::noise_image(&mut common::rng(0), 3, 2);
        assert_eq!(forward(&back, &img).unwrap(), forward(&model, &img).unwrap());
    }
}

#[test]
fn damaged_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.srw");
    let bytes = encode_weights(&common::random_model(&mut common::rng(1), 2, 2, 1));

    fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_weights(&path), Err(Error::Truncated(_))));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    fs::write(&path, &magic).unwrap();
    assert!(matches!(load_weights(&path), Err(Error::BadMagic(_))));

    assert!(matches!(load_weights(&dir.path().join("absent.srw")), Err(Error::Io { .. })));
}
