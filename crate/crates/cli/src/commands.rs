//! One function per subcommand. Each returns what it computed so tests can
//! inspect results without re-reading the files it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Axis;
use wasserfair::audit::{
    curve_area, detect_flipped, discovery_curve, discrimination_scores, found_at, match_and_flip,
    write_curve_csv, write_pairs_csv, write_ranking_csv, Detection,
};
use wasserfair::dataset::{load_csv, preprocess, PreprocessReport};
use wasserfair::linear_models::logreg_fit;
use wasserfair::metrics::{format_sig6, pca_project};
use wasserfair::model_io::ModelFile;
use wasserfair::training::train_nrl;
use wasserfair::{CriticState, Dataset, FairnessReport, Representation, Schema};

use crate::config::{Method, RunConfig, SweepAxis};
use crate::error::{io, CliError};
use crate::pipeline::{evaluate_representation, learn, method_dataset, run_protocol, Evaluation, Learned, Protocol};

pub const REPORT_FILE: &str = "report.toml";
pub const MODEL_FILE: &str = "model.txt";
pub const CRITIC_FILE: &str = "critic.txt";
pub const HISTORY_FILE: &str = "history.csv";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io(path, e))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::config(format!("no {what} given (use --{what}, a preset or the config file)")))
}

/// Loads and preprocesses the configured CSV.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, PreprocessReport), CliError> {
    let schema = Schema::load(required(&cfg.schema, "schema")?)?;
    let raw = load_csv(required(&cfg.dataset, "dataset")?, &schema)?;
    Ok(preprocess(&raw, &schema)?)
}

fn quote(s: &str) -> String {
    format!("{:?}", s)
}

/// Summary of a prepared dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub m: usize,
    pub dropped_rows: usize,
    pub positive_rate: f64,
    pub group_names: Vec<String>,
    pub group_frequencies: Vec<f64>,
    pub protected_frequency: Option<f64>,
}

pub fn summarize(ds: &Dataset, report: &PreprocessReport) -> Summary {
    let freqs = ds.group_frequencies();
    Summary {
        n: ds.n(),
        m: ds.m(),
        dropped_rows: report.dropped_rows,
        positive_rate: ds.positive_rate(),
        group_names: ds.group_names.clone(),
        protected_frequency: ds.protected_group.map(|g| freqs[g]),
        group_frequencies: freqs,
    }
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<Summary, CliError> {
    let (ds, report) = load_dataset(cfg)?;
    ensure_dir(&cfg.out)?;
    ds.save(&cfg.out, "prepared")?;
    let s = summarize(&ds, &report);
    let mut text = String::new();
    writeln!(text, "n = {}", s.n).unwrap();
    writeln!(text, "m = {}", s.m).unwrap();
    writeln!(text, "dropped_rows = {}", s.dropped_rows).unwrap();
    writeln!(text, "positive_rate = {}", format_sig6(s.positive_rate)).unwrap();
    if let Some(f) = s.protected_frequency {
        writeln!(text, "protected_frequency = {}", format_sig6(f)).unwrap();
    }
    let zero_var: Vec<String> = report.zero_variance_columns.iter().map(|c| quote(c)).collect();
    writeln!(text, "zero_variance_columns = [{}]", zero_var.join(", ")).unwrap();
    writeln!(text, "\n[group_frequencies]").unwrap();
    for (name, f) in s.group_names.iter().zip(&s.group_frequencies) {
        writeln!(text, "{} = {}", quote(name), format_sig6(*f)).unwrap();
    }
    write(&cfg.out.join("summary.toml"), &text)?;
    Ok(s)
}

/// Writes the model, critic and history of a training run into `dir`.
pub fn save_learned(dir: &Path, learned: &Learned) -> Result<(), CliError> {
    ensure_dir(dir)?;
    if let Some(rep) = &learned.representation {
        ModelFile::from(rep).save(dir.join(MODEL_FILE))?;
    }
    if let Some(c) = &learned.critic {
        ModelFile::from(c).save(dir.join(CRITIC_FILE))?;
    }
    if let Some(h) = &learned.history {
        h.save_csv(dir.join(HISTORY_FILE))?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Learned, CliError> {
    if !cfg.method.is_trained() {
        return Err(CliError::config(format!(
            "method {} has no trainable representation",
            cfg.method
        )));
    }
    let (ds, _) = load_dataset(cfg)?;
    let data = method_dataset(&ds, cfg.method)?;
    let train = wasserfair::TrainConfig {
        seed: cfg.train.seed.wrapping_add(cfg.seed),
        ..cfg.train.clone()
    };
    let learned = learn(&data, cfg.method, &train)?;
    save_learned(&cfg.out, &learned)?;
    Ok(learned)
}

fn report_text(cfg: &RunConfig, method: Method, ev: &Evaluation) -> String {
    let mut t = String::new();
    let e = &cfg.evaluation;
    writeln!(t, "# wasserfair fairness report").unwrap();
    match e.lambda {
        Some(l) => writeln!(t, "# classifier: lambda = {} (set directly)", format_sig6(l)).unwrap(),
        None => writeln!(
            t,
            "# classifier: inverse strength C = {} -> lambda = 1 / (C * n_train) = {}",
            format_sig6(e.inverse_strength),
            format_sig6(ev.lambda)
        )
        .unwrap(),
    }
    writeln!(
        t,
        "# protocol: {} splits at train fraction {}, {} training repeats; emd = exact W1 on 256-row subsamples, mean of 5 draws",
        e.split_repeats, e.train_fraction, e.full_repeats
    )
    .unwrap();
    writeln!(t, "method = {}", quote(method.name())).unwrap();
    writeln!(t, "seed = {}", cfg.seed).unwrap();
    writeln!(t, "n_train = {}", ev.n_train).unwrap();
    writeln!(t, "lambda = {}", format_sig6(ev.lambda)).unwrap();
    t.push_str(&ev.report.to_kv());
    if let Some(d) = ev.dual_estimate {
        writeln!(t, "dual_estimate = {}", format_sig6(d)).unwrap();
    }
    writeln!(t, "no_predicted_positives = {}", ev.no_predicted_positives).unwrap();
    let list = |v: &[f64]| v.iter().map(|x| format_sig6(*x)).collect::<Vec<_>>().join(", ");
    writeln!(t, "group_means = [{}]", list(&ev.group_means)).unwrap();
    writeln!(t, "class_emd = [{}]", list(&ev.class_emd)).unwrap();
    t
}

fn write_pca(path: &Path, z: &ndarray::Array2<f64>, ds: &Dataset) -> Result<(), CliError> {
    let dims = z.ncols().min(2);
    let pca = pca_project(z.view(), dims)?;
    let mut t = String::from("pc1,pc2,protected,label\n");
    for (i, row) in pca.projection.axis_iter(Axis(0)).enumerate() {
        let second = if dims > 1 { row[1] } else { 0.0 };
        writeln!(t, "{},{},{},{}", row[0], second, ds.p[i], ds.y[i]).unwrap();
    }
    write(path, &t)
}

/// Evaluates a saved representation when `checkpoint` is given, otherwise
/// runs the full protocol (training included). Writes `report.toml` and
/// `pca.csv` into the output directory.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Evaluation, CliError> {
    let (ds, _) = load_dataset(cfg)?;
    ensure_dir(&cfg.out)?;
    let (ev, z, data) = match checkpoint {
        Some(dir) => {
            let data = method_dataset(&ds, cfg.method)?;
            let model_path = if dir.is_dir() { dir.join(MODEL_FILE) } else { dir.to_path_buf() };
            let rep = Representation::try_from(&ModelFile::load(&model_path)?)?;
            let critic_path = model_path.with_file_name(CRITIC_FILE);
            let critic = if critic_path.exists() {
                Some(CriticState::try_from(&ModelFile::load(&critic_path)?)?)
            } else {
                None
            };
            let z = rep.encode(data.x.view())?;
            let mse = rep.reconstruction_loss(data.x.view())?;
            let ev = evaluate_representation(z.view(), &data, mse, critic.as_ref(), &cfg.evaluation, cfg.seed)?;
            (ev, z, data)
        }
        None => {
            let Protocol {
                evaluation,
                learned,
                dataset,
                ..
            } = run_protocol(&ds, cfg.method, cfg)?;
            let z = learned.transform(dataset.x.view())?;
            save_learned(&cfg.out, &learned)?;
            (evaluation, z, dataset)
        }
    };
    write(&cfg.out.join(REPORT_FILE), &report_text(cfg, cfg.method, &ev))?;
    write_pca(&cfg.out.join("pca.csv"), &z, &data)?;
    Ok(ev)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub report: FairnessReport,
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut t = String::from("method");
    for k in FairnessReport::KEYS {
        t.push(',');
        t.push_str(k);
    }
    t.push('\n');
    for r in rows {
        t.push_str(r.method.name());
        for v in r.report.values() {
            t.push(',');
            t.push_str(&format_sig6(v));
        }
        t.push('\n');
    }
    t
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<CompareRow>, CliError> {
    let (ds, _) = load_dataset(cfg)?;
    ensure_dir(&cfg.out)?;
    let mut rows = Vec::new();
    for method in Method::COMPARED {
        let out = run_protocol(&ds, method, cfg)?;
        eprintln!("{method}: {}", out.evaluation.report.to_kv().replace('\n', "  "));
        rows.push(CompareRow {
            method,
            report: out.evaluation.report,
        });
    }
    write(&cfg.out.join("compare.csv"), &compare_csv(&rows))?;
    Ok(rows)
}

/// Results of the label-flip audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    pub flipped: usize,
    pub pairs: usize,
    pub original: Detection,
    pub nrl: Detection,
    pub curve: Vec<(f64, f64)>,
    pub found_at_25: f64,
    pub area: f64,
}

pub fn cmd_audit(cfg: &RunConfig) -> Result<AuditOutcome, CliError> {
    let (ds, _) = load_dataset(cfg)?;
    ensure_dir(&cfg.out)?;
    let (flipped_ds, exp) = match_and_flip(&ds)?;

    let train = wasserfair::TrainConfig {
        seed: cfg.train.seed.wrapping_add(cfg.seed),
        ..cfg.train.clone()
    };
    let (enc, _, _) = train_nrl(&ds, &train)?;
    let z_nrl = Representation::Linear(enc).encode(ds.x.view())?;
    let x = ds.x.view();

    let n = ds.n();
    let grid: Vec<f64> = cfg
        .audit
        .inverse_strength_grid
        .iter()
        .map(|c| 1.0 / (c * n as f64))
        .collect();
    let original = detect_flipped(&flipped_ds, &exp, x, &grid)?;
    let nrl = detect_flipped(&flipped_ds, &exp, z_nrl.view(), &grid)?;

    let (lo, lf) = if cfg.audit.use_grid_for_ranking {
        (original.lambda, nrl.lambda)
    } else {
        let l = cfg.evaluation.lambda_for(n);
        (l, l)
    };
    let p_o = logreg_fit(x, &flipped_ds.y, lo)?.score(x)?;
    let p_f = logreg_fit(z_nrl.view(), &flipped_ds.y, lf)?.score(z_nrl.view())?;
    let ranking = discrimination_scores(p_o.view(), p_f.view())?;
    let group: Vec<usize> = (0..n).filter(|&i| ds.p[i] == exp.target_group).collect();
    let curve = discovery_curve(&ranking, &exp.flipped, &group)?;

    write_curve_csv(cfg.out.join("discovery_curve.csv"), &curve)?;
    write_ranking_csv(cfg.out.join("ranking.csv"), &ranking, &exp.flipped)?;
    write_pairs_csv(cfg.out.join("pairs.csv"), &exp)?;

    let outcome = AuditOutcome {
        flipped: exp.flipped.len(),
        pairs: exp.pairs.len(),
        original,
        nrl,
        found_at_25: found_at(&curve, 0.25),
        area: curve_area(&curve),
        curve,
    };
    let mut t = String::from("# wasserfair label-flip audit\n");
    writeln!(t, "pairs = {}", outcome.pairs).unwrap();
    writeln!(t, "flipped = {}", outcome.flipped).unwrap();
    writeln!(t, "fraction_original = {}", format_sig6(original.fraction)).unwrap();
    writeln!(t, "lambda_original = {}", format_sig6(original.lambda)).unwrap();
    writeln!(t, "fraction_nrl = {}", format_sig6(nrl.fraction)).unwrap();
    writeln!(t, "lambda_nrl = {}", format_sig6(nrl.lambda)).unwrap();
    writeln!(t, "found_at_25 = {}", format_sig6(outcome.found_at_25)).unwrap();
    writeln!(t, "curve_area = {}", format_sig6(outcome.area)).unwrap();
    write(&cfg.out.join("audit.toml"), &t)?;
    Ok(outcome)
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub report: FairnessReport,
}

pub fn apply_sweep_value(cfg: &RunConfig, axis: SweepAxis, value: f64) -> Result<RunConfig, CliError> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::Dim => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::config(format!("dimension {value} is not a positive integer")));
            }
            c.train.latent_dim = value as usize;
        }
        SweepAxis::Alpha => c.train.alpha = value,
        SweepAxis::ClassifierLambda => c.evaluation.lambda = Some(value),
    }
    Ok(c)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    if cfg.sweep.values.is_empty() {
        return Err(CliError::config("sweep needs at least one value"));
    }
    let (ds, _) = load_dataset(cfg)?;
    ensure_dir(&cfg.out)?;
    let mut rows = Vec::new();
    let mut t = String::from("value,mse,emd,f1,parity\n");
    for &v in &cfg.sweep.values {
        let c = apply_sweep_value(cfg, cfg.sweep.axis, v)?;
        let r = run_protocol(&ds, c.method, &c)?.evaluation.report;
        writeln!(
            t,
            "{},{},{},{},{}",
            v,
            format_sig6(r.mse),
            format_sig6(r.emd),
            format_sig6(r.f1),
            format_sig6(r.parity)
        )
        .unwrap();
        rows.push(SweepRow { value: v, report: r });
    }
    write(&cfg.out.join("sweep.csv"), &t)?;
    Ok(rows)
}
