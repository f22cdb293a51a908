use std::path::Path;
use std::process::{Command, Output};

use deblur::image::{load_image, save_image, SaveFormat};
use deblur::metrics::psnr;
use deblur::psf::blur;
use deblur::rdn::load_weights;
use deblur::synth::{blade_edge, checkerboard};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deblur"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).into_owned();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    lines[0].to_string()
}

#[test]
fn blur_deconv_metrics_round() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let truth = checkerboard(48, 48, 6, 0.1, 0.9);
    save_image(&truth, d.join("truth.png"), SaveFormat::Png16).unwrap();

    ok(d, &["blur", "--in", "truth.png", "--out", "blurred.rawf32", "--sigma", "1.5"]);
    let blurred = load_image(d.join("blurred.rawf32")).unwrap();
    assert!(psnr(&blur(&truth, 1.5).unwrap(), &blurred).unwrap() > 60.0);

    ok(d, &["deconv", "--in", "blurred.rawf32", "--out", "rl.rawf32", "--method", "rl", "--iters", "20", "--sigma", "1.5"]);
    ok(d, &["deconv", "--in", "blurred.rawf32", "--out", "blind.png", "--method", "blind", "--iters", "5", "--sigma", "1.5", "--format", "png16"]);

    let stdout = ok(d, &["metrics", "--ref", "truth.png", "--cand", "blurred.rawf32,rl.rawf32", "--out", "report.csv"]);
    assert!(stdout.contains("rl"));
    let csv = std::fs::read_to_string(d.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3, "{csv}");
    assert!(rows[1].starts_with("blurred,"));
    assert!(rows[2].starts_with("rl,"));
    let col = |row: &str, i: usize| row.split(',').nth(i).unwrap().parse::<f64>().unwrap();
    let header: Vec<&str> = rows[0].split(',').collect();
    let p = header.iter().position(|h| *h == "psnr_db").unwrap();
    assert!(col(rows[2], p) > col(rows[1], p));
}

#[test]
fn prep_train_deblur_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::create_dir(d.join("raw")).unwrap();
    for i in 0..2 {
        let img = checkerboard(80, 80, 4 + 2 * i, 0.1, 0.9);
        save_image(&img, d.join(format!("raw/img{i}.png")), SaveFormat::Png8).unwrap();
    }
    let stdout = ok(d, &["prep", "--in", "raw", "--out", "data", "--crop", "64", "--tile", "32", "--sigmas", "1,2"]);
    assert!(stdout.contains("tiles=8 pairs=16"), "{stdout}");

    std::fs::write(d.join("train.cfg"), "# tiny network\nblocks = 1\nlayers = 2\nwidth = 2\nepochs = 2\nlr = 1e-3\nbatch_size = 2\n").unwrap();
    let stdout = ok(d, &[
        "--config", "train.cfg", "train", "--manifest", "data/manifest.json", "--sigma", "1",
        "--epochs", "3", "--seed", "4", "--out", "s1.rdnw",
    ]);
    assert!(stdout.contains("best_epoch="));
    let model = load_weights(d.join("s1.rdnw")).unwrap();
    assert_eq!(model.meta.trained_sigma, 1.0);
    assert_eq!((model.config.blocks, model.config.layers, model.config.width), (1, 2, 2));
    // --epochs on the command line wins over the config file.
    let curve = std::fs::read_to_string(d.join("s1.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 4);
    assert!(curve.starts_with("epoch,train_loss,val_loss\n"));

    std::fs::write(d.join("models.txt"), "1.0 s1.rdnw\n").unwrap();
    let blurred = blur(&checkerboard(40, 70, 5, 0.2, 0.8), 1.0).unwrap();
    save_image(&blurred, d.join("in.png"), SaveFormat::Png16).unwrap();
    ok(d, &["deblur", "--in", "in.png", "--out", "out.png", "--fwhm", "2.355", "--registry", "models.txt", "--tile", "32"]);
    assert_eq!(load_image(d.join("out.png")).unwrap().dims(), (40, 70, 1));

    std::fs::create_dir(d.join("stack")).unwrap();
    for z in 0..3 {
        save_image(&blurred, d.join(format!("stack/z{z}.png")), SaveFormat::Png16).unwrap();
    }
    ok(d, &["deblur", "--in", "stack", "--out", "stack_out", "--sigma", "1.2", "--registry", "models.txt"]);
    for z in 0..3 {
        assert!(d.join(format!("stack_out/z{z}.png")).exists());
    }

    let stdout = ok(d, &["benchmark", "--in", "in.png", "--sigma", "1", "--registry", "models.txt", "--out", "bench", "--iters", "3"]);
    for m in ["blurred", "deconv", "rl", "rdn"] {
        assert!(stdout.contains(m), "{stdout}");
    }
    assert!(d.join("bench/profile.csv").exists());
    assert_eq!(std::fs::read_to_string(d.join("bench/report.csv")).unwrap().lines().count(), 5);
}

#[test]
fn resolution_reports_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let edge = blade_edge(16, 96, 48, 0.1, 0.9);
    save_image(&blur(&edge, 3.0).unwrap(), d.join("before.rawf32"), SaveFormat::RawF32).unwrap();
    save_image(&blur(&edge, 1.5).unwrap(), d.join("after.rawf32"), SaveFormat::RawF32).unwrap();
    let stdout = ok(d, &["resolution", "--before", "before.rawf32", "--after", "after.rawf32", "--line", "8", "--pitch", "2"]);
    let last = stdout.lines().last().unwrap();
    let ratio: f64 = last
        .trim_start_matches("improves the resolution by ")
        .trim_end_matches('×')
        .parse()
        .unwrap();
    assert!((ratio - 2.0).abs() < 0.1, "{stdout}");
}

#[test]
fn errors_are_one_line_with_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    let out = run(d, &["blur", "--in", "missing.png", "--out", "x.png", "--sigma", "1"]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("error kind=io:"));

    let out = run(d, &["blur", "--in", "a.png"]);
    assert!(!out.status.success());
    let line = stderr_line(&out);
    assert!(line.starts_with("error kind=usage:") && line.contains("--sigma"), "{line}");

    std::fs::write(d.join("m.txt"), "").unwrap();
    save_image(&checkerboard(8, 8, 2, 0.0, 1.0), d.join("a.png"), SaveFormat::Png8).unwrap();
    let out = run(d, &["deblur", "--in", "a.png", "--out", "b.png", "--fwhm", "2", "--registry", "m.txt"]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("error kind="));

    std::fs::write(d.join("bad.cfg"), "sigma\n").unwrap();
    let out = run(d, &["--config", "bad.cfg", "blur", "--in", "a.png", "--out", "b.png"]);
    assert!(stderr_line(&out).starts_with("error kind=format:"));
}

#[test]
fn config_supplies_missing_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let img = checkerboard(16, 16, 4, 0.0, 1.0);
    save_image(&img, d.join("a.png"), SaveFormat::Png16).unwrap();
    // Keys the subcommand does not take are ignored.
    std::fs::write(d.join("c.cfg"), "sigma = 2\nepochs = 9\nformat = rawf32\n").unwrap();
    ok(d, &["--config", "c.cfg", "blur", "--in", "a.png", "--out", "b.bin"]);
    let b = load_image(d.join("b.bin")).unwrap();
    assert_eq!(psnr(&blur(&img, 2.0).unwrap(), &b).unwrap(), f64::INFINITY);
    ok(d, &["--config", "c.cfg", "blur", "--in", "a.png", "--out", "c.png", "--sigma", "0.5", "--format", "png16"]);
    let c = load_image(d.join("c.png")).unwrap();
    assert!(psnr(&blur(&img, 0.5).unwrap(), &c).unwrap() > 60.0);
}
