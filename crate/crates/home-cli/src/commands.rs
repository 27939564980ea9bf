//! Subcommand bodies. Each command receives the resolved config, performs
//! its work, and returns a plain error message on failure; main() turns
//! messages into error records and exit codes.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use home_core::data::generate;
use home_core::diagnostics::{
    linear_probe, moment_audit, xor_claim, XOR_MI_CEILING, XOR_TC_TOLERANCE, LN_2,
};
use home_core::model::MlpModel;
use home_core::trainer::{train_from, IterationRecord, TrainSetup};
use home_core::Mat;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::csvio;
use crate::metrics::MetricsWriter;

fn rt(e: impl Display) -> String {
    e.to_string()
}

fn prepare_output_dir(config: &RunConfig) -> Result<PathBuf, String> {
    let dir = config.output_dir();
    fs::create_dir_all(&dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
    Ok(dir)
}

fn build_setup(config: &RunConfig) -> Result<TrainSetup, String> {
    Ok(TrainSetup {
        dims: config.model_dims(),
        view_config: config.view_config(),
        plan: config.loss_plan().map_err(rt)?,
        loss: config.loss_config().map_err(rt)?,
        trainer: config.trainer_config(),
        seed: config.run.seed,
    })
}

pub fn cmd_train(config: &RunConfig, export_data: bool, timing: bool) -> Result<(), String> {
    let out_dir = prepare_output_dir(config)?;
    let hash = config.hash();
    fs::write(out_dir.join("config.toml"), config.canonical_toml())
        .map_err(|e| format!("writing resolved config: {e}"))?;

    let dataset = generate(&config.dataset_params()).map_err(rt)?;
    if export_data {
        csvio::write_dataset(&out_dir.join("dataset.csv"), &dataset.samples, &dataset.labels)
            .map_err(|e| format!("exporting dataset: {e}"))?;
    }
    let setup = build_setup(config)?;
    let mut model = MlpModel::init(&setup.dims, setup.seed).map_err(rt)?;
    checkpoint::save(&model, &out_dir.join("init.ckpt"))
        .map_err(|e| format!("writing init checkpoint: {e}"))?;

    let mut writer = MetricsWriter::create(&out_dir.join("metrics.jsonl"), &hash, timing)
        .map_err(|e| format!("creating metrics file: {e}"))?;
    let mut sink_error: Option<io::Error> = None;
    let mut last: Option<IterationRecord> = None;
    train_from(&dataset, &setup, &mut model, &mut |rec| {
        if sink_error.is_none() {
            if let Err(e) = writer.train_iteration(rec) {
                sink_error = Some(e);
            }
        }
        last = Some(rec.clone());
    })
    .map_err(rt)?;
    if let Some(e) = sink_error {
        return Err(format!("writing metrics: {e}"));
    }
    writer.finish().map_err(|e| format!("writing metrics: {e}"))?;
    checkpoint::save(&model, &out_dir.join("final.ckpt"))
        .map_err(|e| format!("writing final checkpoint: {e}"))?;

    if let Some(rec) = last {
        println!(
            "trained {} ({} epochs, {} iterations), final loss {:.6}",
            config.run.variant,
            config.trainer.epochs,
            rec.iteration + 1,
            rec.loss_total
        );
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}

pub fn cmd_eval(config: &RunConfig, checkpoint_path: &Path, timing: bool) -> Result<(), String> {
    let out_dir = prepare_output_dir(config)?;
    let hash = config.hash();
    let model = checkpoint::load(checkpoint_path)
        .map_err(|e| format!("loading {}: {e}", checkpoint_path.display()))?;
    if model.input_dim() != config.model.input_dim {
        return Err(format!(
            "checkpoint takes {} input features but the config generates {}",
            model.input_dim(),
            config.model.input_dim
        ));
    }
    let dataset = generate(&config.dataset_params()).map_err(rt)?;
    let pass = model.forward(&dataset.samples).map_err(rt)?;
    let representations = pass.representations();

    let train_rows: Vec<usize> = (0..config.probe.train).collect();
    let test_rows: Vec<usize> =
        (config.probe.train..config.probe.train + config.probe.test).collect();
    let train_x = representations.gather_rows(&train_rows).map_err(rt)?;
    let test_x = representations.gather_rows(&test_rows).map_err(rt)?;
    let train_y = &dataset.labels[..config.probe.train];
    let test_y = &dataset.labels[config.probe.train..config.probe.train + config.probe.test];

    let result = linear_probe(&train_x, train_y, &test_x, test_y, &config.probe_config())
        .map_err(rt)?;

    let mut writer = MetricsWriter::create(&out_dir.join("probe.jsonl"), &hash, timing)
        .map_err(|e| format!("creating probe record file: {e}"))?;
    writer
        .probe(
            &checkpoint_path.to_string_lossy(),
            config.probe.train,
            config.probe.test,
            &result,
        )
        .and_then(|_| writer.finish())
        .map_err(|e| format!("writing probe record: {e}"))?;

    println!(
        "probe accuracy {:.4} over {} classes ({} train / {} test rows)",
        result.accuracy, result.class_count, config.probe.train, config.probe.test
    );
    Ok(())
}

pub struct MomentsInput<'a> {
    pub input_csv: Option<&'a Path>,
    pub checkpoint: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

pub fn cmd_moments(config: &RunConfig, input: &MomentsInput, timing: bool) -> Result<(), String> {
    let out_dir = prepare_output_dir(config)?;
    let hash = config.hash();

    let outputs: Mat = match (input.input_csv, input.checkpoint) {
        (Some(csv), None) => {
            let (samples, _labels) =
                csvio::read_dataset(csv).map_err(|e| format!("reading {}: {e}", csv.display()))?;
            samples
        }
        (None, Some(ckpt)) => {
            let model = checkpoint::load(ckpt)
                .map_err(|e| format!("loading {}: {e}", ckpt.display()))?;
            if model.input_dim() != config.model.input_dim {
                return Err(format!(
                    "checkpoint takes {} input features but the config generates {}",
                    model.input_dim(),
                    config.model.input_dim
                ));
            }
            let dataset = generate(&config.dataset_params()).map_err(rt)?;
            let pass = model.forward(&dataset.samples).map_err(rt)?;
            pass.embeddings().clone()
        }
        _ => return Err("pass exactly one of --input-csv or --checkpoint".into()),
    };

    let spec = config.moment_spec(outputs.cols()).map_err(rt)?;
    let audit = moment_audit(&outputs, &spec, config.compute_mode()).map_err(rt)?;

    let csv_path = input
        .out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_dir.join("moments.csv"));
    csvio::write_moments(&csv_path, &audit.report)
        .map_err(|e| format!("writing {}: {e}", csv_path.display()))?;

    let mut writer = MetricsWriter::create(&out_dir.join("moments.jsonl"), &hash, timing)
        .map_err(|e| format!("creating audit record file: {e}"))?;
    for (&order, summary) in &audit.per_order {
        writer
            .moment_order(
                order,
                summary.tuples,
                summary.max_abs,
                summary.mean_abs,
                &summary.histogram,
            )
            .map_err(|e| format!("writing audit record: {e}"))?;
        println!(
            "order {order}: {} tuples, max |moment| {:.3e}, mean |moment| {:.3e}",
            summary.tuples, summary.max_abs, summary.mean_abs
        );
    }
    writer
        .finish()
        .map_err(|e| format!("writing audit record: {e}"))?;
    println!("per-tuple moments in {}", csv_path.display());
    Ok(())
}

pub fn cmd_diagnose(config: &RunConfig, samples: usize, timing: bool) -> Result<(), String> {
    let out_dir = prepare_output_dir(config)?;
    let hash = config.hash();

    let claim = xor_claim(samples, config.run.seed).map_err(rt)?;
    let mut writer = MetricsWriter::create(&out_dir.join("diagnose.jsonl"), &hash, timing)
        .map_err(|e| format!("creating diagnose record file: {e}"))?;
    writer
        .xor_claim(&claim)
        .and_then(|_| writer.finish())
        .map_err(|e| format!("writing diagnose record: {e}"))?;

    println!(
        "xor parity diagnostic: {} samples, seed {}",
        claim.samples, config.run.seed
    );
    let pairs = [(1, 2), (1, 3), (2, 3)];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let mi = claim.pairwise_mi[k];
        let verdict = if mi <= XOR_MI_CEILING { "pass" } else { "FAIL" };
        println!("  MI(bit{a}; bit{b}) = {mi:.6} nats (ceiling {XOR_MI_CEILING}): {verdict}");
    }
    let tc_ok = (claim.total_correlation - LN_2).abs() <= XOR_TC_TOLERANCE;
    println!(
        "  TC = {:.6} nats, target ln 2 = {LN_2:.6} within {XOR_TC_TOLERANCE}: {}",
        claim.total_correlation,
        if tc_ok { "pass" } else { "FAIL" }
    );
    println!(
        "pairwise independence with three-way dependence: {}",
        if claim.passes() { "PASS" } else { "FAIL" }
    );
    Ok(())
}
