use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn glycocc(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glycocc"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn parse_prints_tree() {
    let dir = tempfile::tempdir().unwrap();
    let o = glycocc(dir.path(), &["parse", "Gal(b1-4)Glc"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 2);
    assert_eq!(v["root"], 1);
    assert_eq!(v["edges"][0]["linkage"]["acceptor_position"], 4);
}

#[test]
fn parse_error_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let o = glycocc(dir.path(), &["parse", "Gal(b1-"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("byte 7"), "{e}");
    assert!(e.contains("Gal(b1-"), "{e}");
}

#[test]
fn assemble_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = glycocc(dir.path(), &["assemble", "Glc"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("atoms=12 bonds=12 monomers=1"));
    let o = glycocc(dir.path(), &["assemble", "Gal(b1-4)Glc"]);
    assert!(stdout(&o).contains("atoms=23 bonds=24 monomers=2"), "{}", stdout(&o));
    let o = glycocc(dir.path(), &["assemble", "Glc(b1-1)Glc(b1-4)Glc"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn build_cc_dump() {
    let dir = tempfile::tempdir().unwrap();
    let o = glycocc(dir.path(), &["build-cc", "Glc"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let ranks: Vec<&str> = out.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ranks.iter().filter(|&&r| r == "0").count(), 12);
    assert_eq!(ranks.iter().filter(|&&r| r == "1").count(), 12);
    assert_eq!(ranks.iter().filter(|&&r| r == "2").count(), 1);
}

const GLYCANS: [&str; 12] = [
    "Glc",
    "Gal(b1-4)Glc",
    "Fuc(a1-2)Gal(b1-4)Glc",
    "Man(a1-3)Man",
    "Fuc(a1-6)GlcNAc",
    "Neu5Ac(a2-3)Gal(b1-4)Glc",
    "Xyl(b1-4)Xyl",
    "Fuc(a1-3)[Gal(b1-4)]GlcNAc",
    "GalNAc(a1-3)Gal",
    "Man(a1-6)[Man(a1-3)]Man",
    "Fuc(a1-2)Gal",
    "Rha(a1-2)Glc",
];

fn write_fixture(dir: &Path, name: &str, extra: &str) {
    let mut tsv = String::from("id\tiupac\tlabel\n");
    for (i, g) in GLYCANS.iter().enumerate() {
        tsv.push_str(&format!("g{i}\t{g}\t{}\n", g.contains("Fuc") as u8));
    }
    fs::write(dir.join("data.tsv"), tsv).unwrap();
    let config = format!(
        r#"name = "{name}"
output_dir = "runs/{name}"
{extra}

[data]
name = "fuc"
path = "data.tsv"
task = {{ kind = "binary" }}
fractions = [0.5, 0.25, 0.25]
split_seed = 3

[model]
layers = 1
input_dim = 8
hidden_dim = 8
dropout = 0.0
pooling = "global_mean"

[train]
epochs = 2
batch_size = 4

[mlp]
hidden = [8, 4]
epochs = 2
"#
    );
    fs::write(dir.join(format!("{name}.toml")), config).unwrap();
}

#[test]
fn train_eval_embed_anp_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let wd = dir.path();
    write_fixture(wd, "complex", "");
    let o = glycocc(wd, &["train", "--config", "complex.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = wd.join("runs/complex");
    for f in ["split.tsv", "model.ckpt", "epochs.tsv", "resolved_config.toml", "run.log"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let o = glycocc(wd, &["eval", "--config", "complex.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    assert!(metrics.lines().any(|l| l.contains("\ttest\tfull\tmcc\t")));
    assert!(metrics.lines().any(|l| l.contains("\ttest\tood\tn\t")));

    let o = glycocc(wd, &["embed", "--config", "complex.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let emb = fs::read_to_string(run.join("embeddings.tsv")).unwrap();
    assert!(emb.lines().any(|l| l.starts_with("g1\t")));

    // rerun from the written config, in a copy of the workdir
    let copy = tempfile::tempdir().unwrap();
    fs::copy(wd.join("data.tsv"), copy.path().join("data.tsv")).unwrap();
    fs::copy(run.join("resolved_config.toml"), copy.path().join("again.toml")).unwrap();
    let o = glycocc(copy.path(), &["train", "--config", "again.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = glycocc(copy.path(), &["eval", "--config", "again.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rerun = copy.path().join("runs/complex");
    for f in ["split.tsv", "model.ckpt", "epochs.tsv", "metrics.tsv", "predictions.tsv", "resolved_config.toml"] {
        assert_eq!(fs::read(run.join(f)).unwrap(), fs::read(rerun.join(f)).unwrap(), "{f} differs");
    }

    write_fixture(wd, "fingerprint", "architecture = \"fingerprint_mlp\"");
    let o = glycocc(wd, &["train", "--config", "fingerprint.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = glycocc(
        wd,
        &[
            "anp-report",
            "--reports",
            "runs/complex/metrics.tsv",
            "runs/fingerprint/metrics.tsv",
            "--out",
            "anp.tsv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let anp = fs::read_to_string(wd.join("anp.tsv")).unwrap();
    let models: Vec<&str> = anp.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(models, vec!["complex", "fingerprint"]);
}

#[test]
fn config_errors_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let wd = dir.path();
    write_fixture(wd, "bad", "unknown_key = 1");
    let o = glycocc(wd, &["train", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown_key"), "{}", stderr(&o));

    write_fixture(wd, "fresh", "");
    let o = glycocc(wd, &["eval", "--config", "fresh.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run `train` first"));

    let o = glycocc(wd, &["train", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(1));
}
