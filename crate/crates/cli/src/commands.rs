use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bmseg::eval::output::{
    write_ascan_csv, write_calibration_dat, write_group_csv, write_histogram_dat, write_quintile_csv,
};
use bmseg::eval::uncertainty::{ascan_records, UncertaintyConfig};
use bmseg::eval::{
    ablation_run, histogram_of, localization_errors, pooled_errors, uncertainty_analysis, AblationConfig,
    ErrorReport, ErrorStats, EvalCase, SmoothnessHistogram, UncertaintyReport,
};
use bmseg::phantom::{make_suite, Phantom, SuiteShape};
use bmseg::postproc::{apply_postprocess, PostprocConfig, PostprocReport};
use bmseg::predictor::augment::AugmentConfig;
use bmseg::predictor::{
    infer_volume, load_checkpoint, samples_from_volume, save_checkpoint, train, EpochLog, ToyNet, ToyNetConfig,
    TrainConfig,
};
use bmseg::shape::LossConfig;
use bmseg::surface::SurfaceGrid;
use bmseg::tensor_io::{save_surface, save_tensor, save_volume, Tensor};
use bmseg::{Error, Result};
use serde::Serialize;

use crate::args::{AblateArgs, EvalArgs, InferArgs, LossArgs, OptimArgs, PhantomArgs, PostprocessArgs, TrainArgs};
use crate::store::{
    create_dir, load_entry_truth, load_entry_volume, load_surfaces, read_dataset, save_uncertainty, write_json,
    DatasetEntry, DatasetIndex, SurfaceEntry, SurfaceIndex, DATASET_INDEX, SURFACE_INDEX,
};

/// What a command read and wrote, for the run manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
    pub seeds: Vec<u64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn container_files(stem: &str) -> [String; 2] {
    [format!("{stem}.tns"), format!("{stem}.json")]
}

pub fn phantom(a: &PhantomArgs, out: &Path) -> Result<Outcome> {
    create_dir(out)?;
    let shape = SuiteShape {
        n_bscans: a.bscans,
        height: a.height,
        width: a.width,
    };
    let suite = make_suite(a.suite, a.count, a.seed, shape)?;
    let mut entries = Vec::new();
    let mut outputs = Vec::new();
    for (i, ph) in suite.iter().enumerate() {
        let name = format!("vol_{i:03}");
        let (volume, truth, manifest) = (format!("{name}.volume"), format!("{name}.truth"), format!("{name}.phantom.json"));
        save_volume(&out.join(&volume), &ph.volume)?;
        save_surface(&out.join(&truth), &ph.truth)?;
        write_json(&out.join(&manifest), &ph.manifest)?;
        outputs.extend(container_files(&volume));
        outputs.extend(container_files(&truth));
        outputs.push(manifest.clone());
        entries.push(DatasetEntry {
            name,
            volume,
            truth: Some(truth),
            manifest: Some(manifest),
        });
    }
    write_json(
        &out.join(DATASET_INDEX),
        &DatasetIndex {
            suite: Some(a.suite.name().into()),
            seed: Some(a.seed),
            entries,
        },
    )?;
    outputs.push(DATASET_INDEX.into());
    Ok(Outcome {
        inputs: Vec::new(),
        outputs,
        seeds: vec![a.seed],
    })
}

fn loss_config(l: &LossArgs, width: usize) -> LossConfig {
    let mut cfg = LossConfig::for_width(width);
    cfg.alpha = l.alpha;
    cfg.beta = l.beta;
    cfg.gamma = l.gamma;
    cfg.sigma_target = l.sigma;
    if let Some(h) = l.h {
        cfg.h = h;
    }
    cfg
}

fn train_config(o: &OptimArgs, l: &LossArgs, width: usize, seed: u64, jobs: usize) -> TrainConfig {
    TrainConfig {
        epochs: o.epochs,
        batch_size: o.batch_size,
        learning_rate: o.lr,
        milestones: o.milestones.clone(),
        decay: o.decay,
        loss: loss_config(l, width),
        augment: AugmentConfig {
            probability: o.augment_prob,
            ..Default::default()
        },
        seed,
        jobs,
        ..Default::default()
    }
}

fn net_config(o: &OptimArgs, seed: u64) -> ToyNetConfig {
    ToyNetConfig {
        widths: o.widths.clone(),
        kernel: o.kernel,
        seed,
        ..Default::default()
    }
}

fn load_phantoms(dirs: &[PathBuf]) -> Result<Vec<Phantom>> {
    let mut out = Vec::new();
    for dir in dirs {
        let index = read_dataset(dir)?;
        for e in &index.entries {
            let manifest = match &e.manifest {
                Some(m) => crate::store::read_json(&dir.join(m))?,
                None => return Err(Error::Validation(format!("dataset entry {} has no phantom manifest", e.name))),
            };
            out.push(Phantom {
                volume: load_entry_volume(dir, e)?,
                truth: load_entry_truth(dir, e)?,
                manifest,
            });
        }
    }
    Ok(out)
}

fn write_loss_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    let err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "epoch,lr,total,l1,l2,l3").map_err(err)?;
    for e in log {
        writeln!(w, "{},{},{},{},{},{}", e.epoch, e.learning_rate, e.total, e.l1, e.l2, e.l3).map_err(err)?;
    }
    w.flush().map_err(err)
}

pub fn train_cmd(a: &TrainArgs, out: &Path) -> Result<Outcome> {
    let mut data = Vec::new();
    let mut width = None;
    for dir in &a.data {
        let index = read_dataset(dir)?;
        for e in &index.entries {
            let v = load_entry_volume(dir, e)?;
            width.get_or_insert(v.geometry().width);
            data.extend(samples_from_volume(&v, &load_entry_truth(dir, e)?)?);
        }
    }
    let width = width.ok_or_else(|| Error::Validation("training datasets are empty".into()))?;
    let cfg = train_config(&a.optim, &a.loss, width, a.seed, a.jobs);
    let mut net = ToyNet::new(net_config(&a.optim, a.seed))?;
    let log = train(&mut net, &data, &cfg)?;

    create_dir(out)?;
    let manifest = save_checkpoint(out, &net, cfg.epochs)?;
    write_loss_log(&out.join("loss_log.csv"), &log)?;
    write_json(&out.join("train_config.json"), &cfg)?;
    let mut outputs: Vec<String> = manifest.tensors.iter().flat_map(|t| container_files(t.name.as_str())).collect();
    outputs.extend([
        bmseg::predictor::checkpoint::MANIFEST_NAME.to_string(),
        "loss_log.csv".into(),
        "train_config.json".into(),
    ]);
    Ok(Outcome {
        inputs: a.data.clone(),
        outputs,
        seeds: vec![a.seed],
    })
}

pub fn infer_cmd(a: &InferArgs, out: &Path) -> Result<Outcome> {
    let (net, manifest) = load_checkpoint(&a.checkpoint)?;
    let index = read_dataset(&a.data)?;
    create_dir(out)?;
    let mut entries = Vec::new();
    let mut outputs = Vec::new();
    for e in &index.entries {
        let volume = load_entry_volume(&a.data, e)?;
        let inf = infer_volume(&net, &volume, a.save_probmaps, a.jobs)?;
        let (surface, sigma) = (format!("{}.surface", e.name), format!("{}.sigma", e.name));
        save_surface(&out.join(&surface), &inf.surface)?;
        save_uncertainty(&out.join(&sigma), &inf.uncertainty)?;
        outputs.extend(container_files(&surface));
        outputs.extend(container_files(&sigma));
        let probmap = match &inf.prob_maps {
            Some(maps) => {
                let g = volume.geometry();
                let flat: Vec<f64> = maps.iter().flat_map(|m| m.values().iter().copied()).collect();
                let stem = format!("{}.probmap", e.name);
                save_tensor(
                    &out.join(&stem),
                    &Tensor::from_f64(vec![g.n_bscans, g.height, g.width], &flat)?.with_geometry(*g),
                )?;
                outputs.extend(container_files(&stem));
                Some(stem)
            }
            None => None,
        };
        entries.push(SurfaceEntry {
            name: e.name.clone(),
            surface,
            sigma: Some(sigma),
            probmap,
            report: None,
        });
    }
    write_json(&out.join(SURFACE_INDEX), &SurfaceIndex { entries })?;
    outputs.push(SURFACE_INDEX.into());
    Ok(Outcome {
        inputs: vec![a.checkpoint.clone(), a.data.clone()],
        outputs,
        seeds: vec![manifest.seed],
    })
}

#[derive(Serialize)]
struct PostprocSummary {
    volumes: usize,
    replaced: usize,
    skipped: usize,
}

pub fn postprocess_cmd(a: &PostprocessArgs, out: &Path) -> Result<Outcome> {
    let cfg = PostprocConfig {
        reference: a.reference,
        n_control: a.n_control,
        lambda: a.rigidity,
        tau: a.tau,
        pool_percentile: a.pool_percentile,
        seed: a.seed,
    };
    cfg.validate()?;
    let surfaces = load_surfaces(&a.input)?;
    create_dir(out)?;
    let mut entries = Vec::new();
    let mut outputs = Vec::new();
    let mut summary = PostprocSummary { volumes: 0, replaced: 0, skipped: 0 };
    for s in &surfaces {
        let sigma = s
            .sigma
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("{} has no uncertainty; run infer first", s.name)))?;
        let (fixed, report): (SurfaceGrid, PostprocReport) = apply_postprocess(&s.surface, sigma, &cfg)?;
        let (surface, sig, rep) = (format!("{}.surface", s.name), format!("{}.sigma", s.name), format!("{}.postproc.json", s.name));
        save_surface(&out.join(&surface), &fixed)?;
        save_uncertainty(&out.join(&sig), sigma)?;
        write_json(&out.join(&rep), &report)?;
        outputs.extend(container_files(&surface));
        outputs.extend(container_files(&sig));
        outputs.push(rep.clone());
        summary.volumes += 1;
        summary.replaced += report.replaced;
        summary.skipped += report.skipped as usize;
        entries.push(SurfaceEntry {
            name: s.name.clone(),
            surface,
            sigma: Some(sig),
            probmap: None,
            report: Some(rep),
        });
    }
    write_json(&out.join(SURFACE_INDEX), &SurfaceIndex { entries })?;
    write_json(&out.join("postprocess.json"), &summary)?;
    outputs.extend([SURFACE_INDEX.to_string(), "postprocess.json".into()]);
    Ok(Outcome {
        inputs: vec![a.input.clone()],
        outputs,
        seeds: vec![a.seed],
    })
}

#[derive(Serialize)]
struct VolumeErrors {
    name: String,
    report: ErrorReport,
}

#[derive(Serialize)]
struct EvalSummary {
    pooled: ErrorStats,
    volumes: Vec<VolumeErrors>,
    smoothness: SmoothnessHistogram,
    uncertainty: Option<UncertaintyReport>,
}

const GNUPLOT_SCRIPT: &str = "\
set terminal pngcairo size 900,400
set output 'smoothness.png'
set xlabel 'mu(x+1) - mu(x) [px]'
set ylabel 'pairs'
set style fill solid 0.6
plot 'histogram.dat' using 1:2 with boxes notitle
";

const GNUPLOT_CALIBRATION: &str = "\
set output 'calibration.png'
set xlabel 'predicted sigma [px]'
set ylabel 'mean |error| [px]'
plot 'calibration.dat' using 1:2:3:4 with yerrorbars title 'mean, 95% interval', '' using 1:2 with lines notitle
";

pub fn eval_cmd(a: &EvalArgs, out: &Path) -> Result<Outcome> {
    let preds = load_surfaces(&a.pred)?;
    let truths = load_surfaces(&a.truth)?;
    let mut pairs = Vec::new();
    for p in &preds {
        let t = truths
            .iter()
            .find(|t| t.name == p.name)
            .ok_or_else(|| Error::Validation(format!("no reference surface named {}", p.name)))?;
        pairs.push((p, t));
    }
    if pairs.is_empty() {
        return Err(Error::Validation("nothing to evaluate".into()));
    }
    let volumes = pairs
        .iter()
        .map(|(p, t)| {
            Ok(VolumeErrors {
                name: p.name.clone(),
                report: localization_errors(&p.surface, &t.surface)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let grids: Vec<(&SurfaceGrid, &SurfaceGrid)> = pairs.iter().map(|(p, t)| (&p.surface, &t.surface)).collect();
    let pooled = pooled_errors(&grids)?;
    let diffs: Vec<f64> = pairs.iter().flat_map(|(p, _)| bmseg::eval::adjacent_differences(&p.surface)).collect();
    let smoothness = histogram_of(&diffs, a.bin_width)?;

    create_dir(out)?;
    let mut outputs = vec!["summary.json".to_string(), "histogram.dat".into(), "plots.gp".into()];
    write_histogram_dat(create(&out.join("histogram.dat"))?, &smoothness)?;
    let mut script = GNUPLOT_SCRIPT.to_string();

    let uncertainty = if pairs.iter().all(|(p, _)| p.sigma.is_some()) {
        let cases: Vec<EvalCase> = pairs
            .iter()
            .map(|(p, t)| EvalCase {
                pred: &p.surface,
                reference: &t.surface,
                unc: p.sigma.as_ref().expect("checked above"),
            })
            .collect();
        let rep = uncertainty_analysis(
            &cases,
            &UncertaintyConfig {
                n_permutations: a.permutations,
                seed: a.seed,
            },
        )?;
        let um = pairs[0].1.surface.geometry().axial_um_per_px;
        write_ascan_csv(create(&out.join("ascans.csv"))?, &ascan_records(&cases)?, um)?;
        write_group_csv(create(&out.join("bscans.csv"))?, &rep.bscans)?;
        write_group_csv(create(&out.join("volumes.csv"))?, &rep.volumes)?;
        write_quintile_csv(create(&out.join("quintiles.csv"))?, &rep.quintiles)?;
        write_calibration_dat(create(&out.join("calibration.dat"))?, &rep.calibration)?;
        script.push_str(GNUPLOT_CALIBRATION);
        outputs.extend(
            ["ascans.csv", "bscans.csv", "volumes.csv", "quintiles.csv", "calibration.dat"].map(String::from),
        );
        Some(rep)
    } else {
        None
    };
    std::fs::write(out.join("plots.gp"), script).map_err(|e| Error::io(out.join("plots.gp"), e))?;
    write_json(
        &out.join("summary.json"),
        &EvalSummary {
            pooled,
            volumes,
            smoothness,
            uncertainty,
        },
    )?;
    Ok(Outcome {
        inputs: vec![a.pred.clone(), a.truth.clone()],
        outputs,
        seeds: vec![a.seed],
    })
}

pub fn ablate_cmd(a: &AblateArgs, out: &Path) -> Result<Outcome> {
    let train_set = load_phantoms(&a.train)?;
    let test_set = load_phantoms(std::slice::from_ref(&a.test))?;
    let width = test_set
        .first()
        .map(|p| p.volume.geometry().width)
        .ok_or_else(|| Error::Validation("test dataset is empty".into()))?;
    let cfg = AblationConfig {
        variants: a.variants.clone(),
        net: net_config(&a.optim, a.seed),
        train: train_config(&a.optim, &a.loss, width, a.seed, a.jobs),
        gamma: a.loss.gamma,
        postproc: PostprocConfig {
            n_control: a.n_control,
            lambda: a.rigidity,
            tau: a.tau,
            ..Default::default()
        },
        seed: a.seed,
        jobs: a.jobs,
    };
    let report = ablation_run(&train_set, &test_set, &cfg)?;
    create_dir(out)?;
    write_json(&out.join("ablation.json"), &report)?;
    {
        use std::io::Write;
        let path = out.join("ablation.csv");
        let mut w = create(&path)?;
        let err = |e: std::io::Error| Error::io(&path, e);
        writeln!(w, "variant,mae_px,rmse_px,mae_um,rmse_um,n_large,tail_mass,p_vs_previous").map_err(err)?;
        for (i, r) in report.results.iter().enumerate() {
            let p = i
                .checked_sub(1)
                .map(|j| report.comparisons[j].wilcoxon.p_value.to_string())
                .unwrap_or_default();
            let e = &r.errors;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{p}",
                r.variant.name(),
                e.mae_px,
                e.rmse_px,
                e.mae_um,
                e.rmse_um,
                e.n_large,
                r.tail_mass
            )
            .map_err(err)?;
        }
        w.flush().map_err(err)?;
    }
    let mut inputs = a.train.clone();
    inputs.push(a.test.clone());
    Ok(Outcome {
        inputs,
        outputs: vec!["ablation.json".into(), "ablation.csv".into()],
        seeds: vec![a.seed],
    })
}
