//! Runs the checked-in fuzz corpus, plus truncations and byte flips of every
//! seed, through the same checks the fuzz targets use.

use std::path::PathBuf;

use fairlicit_core::fuzz_checks;

type Check = fn(&[u8]);

const TARGETS: [(&str, Check); 7] = [
    ("schema_json", fuzz_checks::schema_json),
    ("dataset_csv", fuzz_checks::dataset_csv),
    ("dataset_json", fuzz_checks::dataset_json),
    ("session_log", fuzz_checks::session_log),
    ("response_payload", fuzz_checks::response_payload),
    ("weights_param", fuzz_checks::weights_param),
    ("model_json", fuzz_checks::model_json),
];

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn every_target_has_seeds() {
    for (target, _) in TARGETS {
        assert!(seeds(target).len() >= 2, "{target}");
    }
}

#[test]
fn seeds_pass_their_checks() {
    for (target, check) in TARGETS {
        for (name, data) in seeds(target) {
            let r = std::panic::catch_unwind(|| check(&data));
            assert!(r.is_ok(), "{target}/{name}");
        }
    }
}

#[test]
fn mutated_seeds_pass_their_checks() {
    for (target, check) in TARGETS {
        for (name, data) in seeds(target) {
            let stride = (data.len() / 64).max(1);
            for cut in (0..data.len()).step_by(stride) {
                let r = std::panic::catch_unwind(|| check(&data[..cut]));
                assert!(r.is_ok(), "{target}/{name} cut at {cut}");
            }
            for at in (0..data.len()).step_by(stride) {
                for byte in [b'0', b'"', b',', b'-', b'9', 0xff] {
                    let mut m = data.clone();
                    m[at] = byte;
                    let r = std::panic::catch_unwind(|| check(&m));
                    assert!(r.is_ok(), "{target}/{name} byte {at} := {byte:#x}");
                }
            }
        }
    }
}
