//! End-to-end tests of the `gencomp` binary: the full workflow on a tiny
//! toy model, plus flag and error-path contracts. Everything runs in a
//! fresh temp directory via `CARGO_BIN_EXE_gencomp`.

use std::path::Path;
use std::process::{Command, Output};

fn gencomp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gencomp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = gencomp(args, dir);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn full_workflow_on_toy_model() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // Data generation: labeled shapes and motion clips.
    ok(
        &["gen-data", "--kind", "shapes", "--count", "8", "--size", "16", "--seed", "5", "--out", "shapes"],
        dir,
    );
    assert!(dir.join("shapes/shape_000008.pgm").exists());
    let labels = std::fs::read_to_string(dir.join("shapes/labels.csv")).unwrap();
    assert!(labels.starts_with("file,label\n"));
    assert_eq!(labels.lines().count(), 9);

    ok(
        &["gen-data", "--kind", "motion", "--count", "1", "--size", "16", "--seed", "11", "--out", "vids"],
        dir,
    );
    assert!(dir.join("vids/video_001/frame_000025.pgm").exists());

    // Two-stage training (tiny -> fast; quality is irrelevant here).
    ok(
        &[
            "train", "--data", "shapes", "--latent-dim", "8", "--iters", "30",
            "--batch", "4", "--seed", "3", "--lambda1", "1", "--lambda2", "0.002",
            "--gen-steps", "2", "--out", "model.nb",
        ],
        dir,
    );
    let info = ok(&["info", "--in", "model.nb"], dir);
    assert!(info.contains("format: NB01"));
    assert!(info.contains("meta.latent_dim=8"));
    assert!(info.contains("meta.disc_steps=1"));
    assert!(info.contains("meta.gen_steps=2"));

    // Image round trip.
    let enc = ok(
        &["encode", "--model", "model.nb", "--bits", "5", "--in", "shapes/shape_000001.pgm", "--out", "a.nc"],
        dir,
    );
    assert!(enc.contains("40 payload bits"));
    let info = ok(&["info", "--in", "a.nc"], dir);
    assert!(info.contains("format: NC01"));
    assert!(info.contains("bits: 5"));
    ok(&["decode", "--model", "model.nb", "--in", "a.nc", "--out", "rec.pgm"], dir);
    assert!(dir.join("rec.pgm").exists());

    // Deterministic encode: same input, same bytes.
    ok(
        &["encode", "--model", "model.nb", "--bits", "5", "--in", "shapes/shape_000001.pgm", "--out", "b.nc"],
        dir,
    );
    assert_eq!(
        std::fs::read(dir.join("a.nc")).unwrap(),
        std::fs::read(dir.join("b.nc")).unwrap()
    );

    // Channel: corrupted payload still decodes (fixed-width path), header
    // untouched.
    ok(
        &["channel", "--ber", "0.05", "--seed", "9", "--in", "a.nc", "--out", "noisy.nc"],
        dir,
    );
    let clean = std::fs::read(dir.join("a.nc")).unwrap();
    let noisy = std::fs::read(dir.join("noisy.nc")).unwrap();
    assert_eq!(clean.len(), noisy.len());
    assert_eq!(clean[..20], noisy[..20], "header must pass through clean");
    ok(&["decode", "--model", "model.nb", "--in", "noisy.nc", "--out", "rec_noisy.pgm"], dir);

    // Video round trip with Huffman.
    ok(
        &[
            "encode-video", "--model", "model.nb", "--bits", "5", "--stride", "4",
            "--huffman", "--in", "vids/video_001", "--out", "v.mc",
        ],
        dir,
    );
    let info = ok(&["info", "--in", "v.mc"], dir);
    assert!(info.contains("format: MC01"));
    assert!(info.contains("total_frames: 25"));
    assert!(info.contains("keyframes: 7"));
    ok(&["decode-video", "--model", "model.nb", "--in", "v.mc", "--out", "vrec"], dir);
    assert!(dir.join("vrec/frame_000025.pgm").exists());

    // Eval: CSV + JSON twins, one row per spec.
    let eval = ok(
        &["eval", "--model", "model.nb", "--data", "shapes", "--specs", "8:5,4:2", "--out", "report.csv"],
        dir,
    );
    assert!(eval.contains("latent_dim,bits,psnr_db"));
    let csv = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.join("report.json").exists());

    // Robustness sweep: deterministic rows, one per rate.
    let curve = ok(
        &[
            "robustness", "--model", "model.nb", "--data", "shapes", "--bits", "5",
            "--bers", "0,1e-2", "--trials", "2", "--out", "curve.csv",
        ],
        dir,
    );
    assert_eq!(curve.lines().count(), 4); // header + 2 rows + written-to line

    // Classifier + probe.
    ok(
        &[
            "train-classifier", "--data", "shapes", "--classes", "3", "--iters", "40",
            "--batch", "4", "--seed", "2", "--out", "clf.nb",
        ],
        dir,
    );
    let probe = ok(
        &["probe", "--classifier", "clf.nb", "--model", "model.nb", "--bits", "5", "--data", "shapes"],
        dir,
    );
    assert!(probe.contains("accuracy uncompressed = "));
    assert!(probe.contains("accuracy ncode(M=8,b=5) = "));
}

#[test]
fn errors_are_single_line_and_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("junk.nc"), b"not a container").unwrap();
    std::fs::write(dir.join("model.nb"), b"also junk").unwrap();

    for args in [
        vec!["decode", "--model", "model.nb", "--in", "junk.nc", "--out", "x.pgm"],
        vec!["info", "--in", "junk.nc"],
        vec!["channel", "--ber", "2.0", "--seed", "1", "--in", "junk.nc", "--out", "y.nc"],
        vec!["gen-data", "--kind", "shapes", "--count", "4", "--size", "3", "--seed", "1", "--out", "d"],
    ] {
        let out = gencomp(&args, dir);
        assert!(!out.status.success(), "{args:?} should fail");
        let stderr = String::from_utf8_lossy(&out.stderr);
        let lines: Vec<&str> = stderr.lines().collect();
        assert_eq!(lines.len(), 1, "stderr not single-line: {stderr}");
        assert!(lines[0].starts_with("error: "), "got {stderr}");
    }

    // Unknown flags are also rejected (clap handles these; exit nonzero).
    let out = gencomp(&["encode", "--nonsense"], dir);
    assert!(!out.status.success());
}

#[test]
fn channel_zero_rate_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // A handcrafted minimal NC01 file: M=4, b=2, 16x16, 1 channel.
    let mut nc = Vec::new();
    nc.extend_from_slice(b"NC01");
    nc.extend_from_slice(&4u16.to_le_bytes());
    nc.push(2);
    nc.extend_from_slice(&16u16.to_le_bytes());
    nc.extend_from_slice(&16u16.to_le_bytes());
    nc.push(1);
    nc.extend_from_slice(&0u64.to_le_bytes());
    nc.push(0x93);
    std::fs::write(dir.join("z.nc"), &nc).unwrap();
    ok(&["channel", "--ber", "0", "--seed", "1", "--in", "z.nc", "--out", "z2.nc"], dir);
    assert_eq!(std::fs::read(dir.join("z2.nc")).unwrap(), nc);
}
