use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use glycocc::bench::{
    self, fingerprint_mlp_baseline, load_dataset, load_proteins, prepare, random_split, read_split, write_split,
    Dataset, EpochRecord, EvalReport, Partition, SplitAssignment,
};
use glycocc::complex;
use glycocc::glycan::{parse_iupac, GlycanError, GlycanTree, ParseWarning};
use glycocc::homp::{build_model, write_embeddings_tsv, CellBatch, Model};
use glycocc::molgraph::{self, write_smiles};

use crate::config::{Architecture, RunConfig, RESOLVED_CONFIG};
use crate::error::CliError;
use crate::report::{anp_table, human_table, read_rows, rows_of, write_rows, MetricRow};

const SPLIT_FILE: &str = "split.tsv";
const CHECKPOINT: &str = "model.ckpt";
const EPOCH_LOG: &str = "epochs.tsv";
const METRICS: &str = "metrics.tsv";
const PREDICTIONS: &str = "predictions.tsv";
const EMBEDDINGS: &str = "embeddings.tsv";
const LOG_FILE: &str = "run.log";

fn init_stderr_logger() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
}

/// Timestamps go to the run log only.
fn init_run_logger(dir: &Path) -> Result<(), CliError> {
    let path = dir.join(LOG_FILE);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| CliError::io(&path, e))?;
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(file)))
        .try_init();
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn glycan_error(input: &str, e: &GlycanError) -> CliError {
    let caret = " ".repeat(e.offset().min(input.len()));
    CliError::user(format!("{e}\n  {input}\n  {caret}^"))
}

fn parse_glycan(input: &str) -> Result<GlycanTree, CliError> {
    parse_iupac(input).map_err(|e| glycan_error(input, &e))
}

fn assemble_glycan(input: &str) -> Result<(GlycanTree, molgraph::MolecularGraph), CliError> {
    let tree = parse_glycan(input)?;
    let graph = molgraph::assemble(&tree).map_err(|e| CliError::user(format!("cannot assemble `{input}`: {e}")))?;
    Ok((tree, graph))
}

fn print_warnings(tree: &GlycanTree) {
    for w in tree.warnings() {
        match w {
            ParseWarning::UnspecifiedAnomer { node } => {
                eprintln!("warning: residue {node} ({}) has no anomeric configuration", tree.nodes[node].name)
            }
        }
    }
}

pub fn parse(input: &str) -> Result<(), CliError> {
    init_stderr_logger();
    let tree = parse_glycan(input)?;
    print_warnings(&tree);
    let json = serde_json::to_string_pretty(&tree).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{json}");
    Ok(())
}

pub fn assemble(input: &str) -> Result<(), CliError> {
    init_stderr_logger();
    let (tree, graph) = assemble_glycan(input)?;
    print_warnings(&tree);
    let smiles = write_smiles(&graph).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{smiles}");
    println!("atoms={} bonds={} monomers={}", graph.n_atoms(), graph.n_bonds(), graph.attribution.as_ref().map_or(0, |a| a.n_monomers()));
    Ok(())
}

pub fn build_cc(input: &str) -> Result<(), CliError> {
    init_stderr_logger();
    let (_, graph) = assemble_glycan(input)?;
    let cc = complex::build_cc(&graph).map_err(|e| CliError::Internal(e.to_string()))?;
    print!("{}", cc.dump());
    Ok(())
}

struct Run {
    config: RunConfig,
    workdir: PathBuf,
    out: PathBuf,
}

impl Run {
    fn start(workdir: &Path, config_path: &Path) -> Result<Run, CliError> {
        let config = RunConfig::load(&workdir.join(config_path))?;
        let out = workdir.join(&config.output_dir);
        fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        init_run_logger(&out)?;
        log::info!("config {} resolved", config_path.display());
        write_file(&out.join(RESOLVED_CONFIG), config.to_toml()?.as_bytes())?;
        Ok(Run {
            config,
            workdir: workdir.to_path_buf(),
            out,
        })
    }

    fn dataset(&self) -> Result<Dataset, CliError> {
        let d = &self.config.data;
        let path = self.workdir.join(&d.path);
        let mut data = load_dataset(&path, d.task).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        if let Some(p) = &d.proteins {
            let path = self.workdir.join(p);
            data.proteins = Some(load_proteins(&path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?);
        }
        log::info!("{} records loaded, {} dropped", data.len(), data.dropped.len());
        Ok(data)
    }

    fn read_split(&self, path: &Path) -> Result<SplitAssignment, CliError> {
        let f = File::open(path).map_err(|e| CliError::io(path, e))?;
        read_split(BufReader::new(f)).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
    }

    /// The configured split restricted to loaded records, with OOD flags.
    fn split(&self, data: &Dataset, saved: bool) -> Result<SplitAssignment, CliError> {
        let d = &self.config.data;
        let mut split = if saved {
            let path = self.out.join(SPLIT_FILE);
            if !path.exists() {
                return Err(CliError::user(format!("{} not found; run `train` first", path.display())));
            }
            self.read_split(&path)?
        } else if let Some(p) = &d.split_file {
            self.read_split(&self.workdir.join(p))?
        } else {
            random_split(&data.ids(), d.fractions, d.split_seed)?
        };
        let known: std::collections::HashSet<&str> = data.ids().into_iter().collect();
        split.partition.retain(|id, _| known.contains(id.as_str()));
        split.compute_ood(data, d.ood_threshold);
        Ok(split)
    }

    fn write_reports(&self, reports: &[EvalReport]) -> Result<Vec<MetricRow>, CliError> {
        let rows: Vec<MetricRow> = reports
            .iter()
            .flat_map(|r| rows_of(&self.config.name, &self.config.data.name, r))
            .collect();
        write_file(&self.out.join(METRICS), write_rows(&rows).as_bytes())?;
        let mut preds = String::from("id\tpartition\tscores\n");
        for r in reports {
            for (id, s) in &r.predictions {
                let s: Vec<String> = s.iter().map(f64::to_string).collect();
                let _ = writeln!(preds, "{id}\t{}\t{}", r.partition, s.join(","));
            }
        }
        write_file(&self.out.join(PREDICTIONS), preds.as_bytes())?;
        Ok(rows)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn epoch_log(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\tloss\tval_accuracy\tval_auroc\tval_mcc\tval_mae\tval_mse\n");
    for e in log {
        let v = e.val.clone().unwrap_or_default();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.epoch,
            e.loss,
            opt(v.accuracy),
            opt(v.auroc),
            opt(v.mcc),
            opt(v.mae),
            opt(v.mse)
        );
    }
    out
}

fn print_rows(rows: &[MetricRow]) {
    let body: Vec<Vec<String>> = rows
        .iter()
        .filter(|r| r.metric != "n")
        .map(|r| vec![r.partition.clone(), r.subset.clone(), r.metric.clone(), format!("{:.4}", r.value)])
        .collect();
    print!("{}", human_table(&["partition", "subset", "metric", "value"], &body));
}

pub fn train(workdir: &Path, config_path: &Path) -> Result<(), CliError> {
    let run = Run::start(workdir, config_path)?;
    let data = run.dataset()?;
    let split = run.split(&data, false)?;
    let mut buf = Vec::new();
    write_split(&mut buf, &split).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&run.out.join(SPLIT_FILE), &buf)?;
    log::info!(
        "split {}/{}/{}",
        split.count(Partition::Train),
        split.count(Partition::Val),
        split.count(Partition::Test)
    );
    let epochs = match run.config.architecture {
        Architecture::Complex => {
            let prepared = prepare(&run.config.model, &data)?;
            let mut model = build_model(run.config.model.clone())?;
            log::info!("{} trainable parameters", model.param_count());
            let outcome = bench::train(&mut model, &prepared, &split, &run.config.train)?;
            model.save(&run.out.join(CHECKPOINT))?;
            outcome.epochs
        }
        Architecture::FingerprintMlp => {
            let outcome = fingerprint_mlp_baseline(&data, &split, &run.config.mlp)?;
            let reports: Vec<EvalReport> = outcome
                .reports
                .into_iter()
                .filter(|r| r.partition != Partition::Train)
                .collect();
            print_rows(&run.write_reports(&reports)?);
            outcome.epochs
        }
    };
    write_file(&run.out.join(EPOCH_LOG), epoch_log(&epochs).as_bytes())?;
    let last = epochs.last().map(|e| e.loss).unwrap_or(f64::NAN);
    println!("trained `{}` for {} epochs, final loss {last:.6}", run.config.name, epochs.len());
    log::info!("train finished");
    Ok(())
}

fn load_model(run: &Run) -> Result<Model, CliError> {
    let path = run.out.join(CHECKPOINT);
    if !path.exists() {
        return Err(CliError::user(format!("{} not found; run `train` first", path.display())));
    }
    Model::load(run.config.model.clone(), &path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}

fn require_complex(run: &Run, command: &str) -> Result<(), CliError> {
    if run.config.architecture != Architecture::Complex {
        return Err(CliError::user(format!(
            "`{command}` needs architecture = \"complex\"; fingerprint runs write their metrics during `train`"
        )));
    }
    Ok(())
}

pub fn eval(workdir: &Path, config_path: &Path) -> Result<(), CliError> {
    let run = Run::start(workdir, config_path)?;
    require_complex(&run, "eval")?;
    let data = run.dataset()?;
    let split = run.split(&data, true)?;
    let model = load_model(&run)?;
    let prepared = prepare(&run.config.model, &data)?;
    let batch = run.config.train.batch_size;
    let mut reports = Vec::new();
    for part in [Partition::Val, Partition::Test] {
        if split.count(part) > 0 {
            reports.push(bench::evaluate(&model, &prepared, &split, part, batch)?);
        }
    }
    print_rows(&run.write_reports(&reports)?);
    log::info!("eval finished");
    Ok(())
}

pub fn embed(workdir: &Path, config_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let run = Run::start(workdir, config_path)?;
    require_complex(&run, "embed")?;
    let data = run.dataset()?;
    let model = load_model(&run)?;
    let prepared = prepare(&run.config.model, &data)?;
    let path = out.map(|p| workdir.join(p)).unwrap_or_else(|| run.out.join(EMBEDDINGS));
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for (i, r) in data.records.iter().enumerate() {
        let graph = molgraph::assemble(&r.tree).map_err(|e| CliError::Internal(e.to_string()))?;
        let cc = complex::build_cc(&graph).map_err(|e| CliError::Internal(e.to_string()))?;
        let mut batch = CellBatch::from_cells(&[&prepared.cells[i]])?;
        if let Some(extra) = &prepared.extra {
            batch = batch.with_extra(glycocc::tensor::Tensor::from_rows(&[extra[i].clone()]))?;
        }
        let states = model.embed(&batch)?;
        write_embeddings_tsv(&mut w, &r.id, &cc, &states).map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    println!("wrote embeddings of {} glycans to {}", data.len(), path.display());
    Ok(())
}

pub fn anp_report(workdir: &Path, reports: &[PathBuf], partition: &str, subset: &str, out: &Path) -> Result<(), CliError> {
    init_stderr_logger();
    let mut rows = Vec::new();
    for p in reports {
        let path = workdir.join(p);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        rows.extend(read_rows(&text, &path.display().to_string())?);
    }
    let scores = anp_table(&rows, partition, subset)?;
    let mut tsv = String::from("model\tanp\n");
    for (m, s) in &scores {
        let _ = writeln!(tsv, "{m}\t{s}");
    }
    write_file(&workdir.join(out), tsv.as_bytes())?;
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let body: Vec<Vec<String>> = sorted.iter().map(|(m, s)| vec![m.clone(), format!("{s:.4}")]).collect();
    print!("{}", human_table(&["model", "anp"], &body));
    Ok(())
}
