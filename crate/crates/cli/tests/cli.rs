use std::path::Path;
use std::process::{Command, Output};

fn cellmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellmix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Minimal standalone TBF reader: (dims, raw 32-bit payload words).
fn raw_tbf(path: &Path) -> (Vec<usize>, Vec<u32>) {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[..4], b"CMIX");
    let ndim = bytes[7] as usize;
    let dims: Vec<usize> = (0..ndim)
        .map(|d| u32::from_le_bytes(bytes[8 + 4 * d..12 + 4 * d].try_into().unwrap()) as usize)
        .collect();
    let words = bytes[8 + 4 * ndim..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect::<Vec<_>>();
    assert_eq!(words.len(), dims.iter().product::<usize>());
    (dims, words)
}

#[test]
fn soft_labels_recount_from_emitted_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("d");
    let aug = d.join("a");
    let gen = cellmix(&["gen", "--seed", "21", "--classes", "3", "--out", s(&data)]);
    assert_eq!(code(&gen), 0);
    for mode in ["group", "split"] {
        let out = cellmix(&[
            "augment",
            "--images",
            s(&d.join("d.images.tbf")),
            "--labels",
            s(&d.join("d.labels.tbf")),
            "--out",
            s(&aug),
            "--seed",
            "4",
            "--mode",
            mode,
            "--beta",
            "0.9",
            "--patch-size",
            "16",
            "--trigger-prob",
            "1",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

        let (_, labels) = raw_tbf(&d.join("d.labels.tbf"));
        let (pdims, source) = raw_tbf(&d.join("a.provenance.tbf"));
        let (sdims, soft) = raw_tbf(&d.join("a.soft.tbf"));
        let (b, n, k) = (pdims[0], pdims[1], sdims[1]);
        assert_eq!((b, n, sdims[0]), (8, 576, 8));
        for row in 0..b {
            let mut counts = vec![0usize; k];
            for i in 0..n {
                counts[labels[source[row * n + i] as usize] as usize] += 1;
            }
            for c in 0..k {
                let got = f32::from_bits(soft[row * k + c]) as f64;
                assert!(
                    (got - counts[c] as f64 / n as f64).abs() <= 1e-6,
                    "{mode} row {row}"
                );
            }
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&cellmix(&["gen", "--out", s(&d.join("x"))])), 2);
    assert_eq!(code(&cellmix(&["frobnicate"])), 2);
    assert_eq!(
        code(&cellmix(&[
            "gen",
            "--seed",
            "1",
            "--beta",
            "2",
            "--out",
            s(&d.join("x"))
        ])),
        4
    );
    assert_eq!(
        code(&cellmix(&[
            "gen",
            "--seed",
            "1",
            "--image-side",
            "100",
            "--out",
            s(&d.join("x"))
        ])),
        4
    );

    assert_eq!(
        code(&cellmix(&[
            "gen",
            "--seed",
            "1",
            "--batch-size",
            "2",
            "--out",
            s(&d.join("g"))
        ])),
        0
    );
    let images = d.join("g.images.tbf");
    let bytes = std::fs::read(&images).unwrap();
    let cut = d.join("cut.tbf");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(code(&cellmix(&["inspect", s(&cut)])), 3);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&cut, &bad).unwrap();
    let out = cellmix(&[
        "augment",
        "--images",
        s(&cut),
        "--labels",
        s(&d.join("g.labels.tbf")),
        "--out",
        s(&d.join("o")),
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 3);
    assert!(!d.join("o.images.tbf").exists());

    let config = d.join("c.json");
    std::fs::write(&config, r#"{"seed": 1, "bogus": true}"#).unwrap();
    assert_eq!(
        code(&cellmix(&[
            "--config",
            s(&config),
            "gen",
            "--out",
            s(&d.join("y"))
        ])),
        3
    );
}

#[test]
fn config_file_drives_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("run.json");
    std::fs::write(&config, r#"{"policy": "back", "threshold": 4.0}"#).unwrap();
    let losses = d.join("l.csv");
    std::fs::write(&losses, "# golden\n3\n5\n3\n").unwrap();
    let out = cellmix(&["--config", s(&config), "trace", "--losses", s(&losses)]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let ks: Vec<&str> = stdout
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(ks, ["1", "0", "1"]);
}
