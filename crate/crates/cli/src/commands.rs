use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use mmpath::channel::{
    generate_dataset, has_truth_columns, load_dataset, load_trajectory, write_dataset_csv, write_trajectory_csv,
};
use mmpath::classifier::{
    confusion, cross_validate, n_classes_for, rows_from_measurements, split_dataset, train_bagged, Ensemble,
    FeatureRow, DEFAULT_SPLIT,
};
use mmpath::evaluation::{cdf_points, compare_runs, write_cdf_csv, Report, RunSummary};
use mmpath::positioning::{
    group_epochs, load_fixes, position_trajectory, write_fixes_csv, Baseline, FixRow, Mode, OracleLabels,
    OrderClassifier, PipelineConfig, Positioner,
};
use mmpath::raytracer::Scene;
use mmpath::scenes::{epochs_for_target, generate_scene, sample_route};
use mmpath::{Error, Result};

use crate::config::RunConfig;

const PILOT_EPOCHS: usize = 200;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn gen_scene(cfg: &RunConfig, out: &mut String) -> Result<()> {
    let generated = generate_scene(&cfg.scene_params)?;
    let n_epochs = match cfg.n_epochs {
        0 => epochs_for_target(
            &generated.scene,
            &generated.route,
            cfg.max_order,
            cfg.target_rows,
            PILOT_EPOCHS,
        )?,
        n => n,
    };
    let trajectory = sample_route(&generated.route, n_epochs, cfg.speed_mps, cfg.ue_height)?;
    write_text(&cfg.scene, &generated.scene.to_json())?;
    let mut w = create(&cfg.trajectory)?;
    write_trajectory_csv(&mut w, &trajectory)?;
    w.flush().map_err(|e| io_err(&cfg.trajectory, e))?;

    let _ = writeln!(
        out,
        "scene {}: {} walls, {} gNBs",
        cfg.scene_params.kind,
        generated.scene.walls().len(),
        generated.scene.gnbs().len()
    );
    let _ = writeln!(out, "trajectory: {n_epochs} epochs");
    let _ = writeln!(out, "wrote {}", cfg.scene.display());
    let _ = writeln!(out, "wrote {}", cfg.trajectory.display());
    Ok(())
}

pub fn gen_dataset(cfg: &RunConfig, out: &mut String) -> Result<()> {
    let scene = Scene::load(&cfg.scene)?;
    let trajectory = load_trajectory(&cfg.trajectory)?;
    let ds = generate_dataset(&scene, &trajectory, &cfg.radio, &cfg.noise(), cfg.max_order)?;
    let mut w = create(&cfg.dataset)?;
    write_dataset_csv(&mut w, &ds.measurements, true)?;
    w.flush().map_err(|e| io_err(&cfg.dataset, e))?;

    let _ = writeln!(out, "epochs: {}", trajectory.len());
    let _ = writeln!(out, "rows: {}", ds.measurements.len());
    let hist: Vec<String> = ds
        .label_histogram()
        .iter()
        .enumerate()
        .map(|(l, n)| format!("{l}:{n}"))
        .collect();
    let _ = writeln!(out, "labels: {}", hist.join(" "));
    let _ = writeln!(out, "outage links: {}", ds.outages.len());
    let _ = writeln!(out, "wrote {}", cfg.dataset.display());
    Ok(())
}

fn labeled_rows(cfg: &RunConfig) -> Result<(Vec<FeatureRow>, usize)> {
    let ms = load_dataset(&cfg.dataset)?;
    let rows = rows_from_measurements(&ms)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: dataset has no rows", cfg.dataset.display())));
    }
    let max_label = rows.iter().map(|r| usize::from(r.label)).max().unwrap_or(0);
    Ok((rows, n_classes_for(cfg.max_order).max(max_label + 1)))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn train(cfg: &RunConfig, out: &mut String) -> Result<()> {
    let (rows, n_classes) = labeled_rows(cfg)?;
    let (tr, va, te) = split_dataset(&rows, DEFAULT_SPLIT, cfg.split_seed())?;
    let model = train_bagged(&tr, n_classes, cfg.bagging, cfg.bagging_seed())?;
    model.save(&cfg.model)?;

    let _ = writeln!(
        out,
        "rows: train {} validation {} test {}",
        tr.len(),
        va.len(),
        te.len()
    );
    let _ = writeln!(out, "trees: {}", model.trees().len());
    let _ = writeln!(out, "validation accuracy: {:.4}", model.accuracy(&va));
    let _ = writeln!(out, "test accuracy: {:.4}", model.accuracy(&te));
    if cfg.cv_folds >= 2 {
        let dev: Vec<FeatureRow> = tr.iter().chain(&va).copied().collect();
        let folds = cross_validate(&dev, n_classes, cfg.cv_folds, cfg.bagging, cfg.cv_seed())?;
        let listed: Vec<String> = folds.iter().map(|a| format!("{a:.4}")).collect();
        let (mean, std) = mean_std(&folds);
        let _ = writeln!(
            out,
            "{}-fold CV accuracy: {} (mean {mean:.4}, std {std:.4})",
            cfg.cv_folds,
            listed.join(" ")
        );
    }
    let cm = confusion(&model, &te)?;
    let _ = writeln!(out, "test confusion (rows true, columns predicted):");
    let _ = write!(out, "{cm}");
    let _ = writeln!(out, "wrote {}", cfg.model.display());
    Ok(())
}

pub fn eval_classifier(cfg: &RunConfig, out: &mut String) -> Result<()> {
    let model = Ensemble::load(&cfg.model)?;
    let (rows, _) = labeled_rows(cfg)?;
    let cm = confusion(&model, &rows)?;
    let _ = writeln!(out, "rows: {}", rows.len());
    let _ = writeln!(out, "accuracy: {:.4}", cm.accuracy());
    for c in 0..cm.n_classes() {
        let _ = writeln!(
            out,
            "class {c}: false negatives {} false positives {}",
            cm.false_negatives(c),
            cm.false_positives(c)
        );
    }
    let _ = writeln!(out, "confusion (rows true, columns predicted):");
    let _ = write!(out, "{cm}");
    Ok(())
}

fn mode_tag(mode: Mode) -> (&'static str, &'static str) {
    match mode {
        Mode::SbrOnly => ("sbr", "SBR"),
        Mode::LosPreferred => ("los", "LoS"),
    }
}

pub fn position(cfg: &RunConfig, out: &mut String) -> Result<()> {
    let scene = Scene::load(&cfg.scene)?;
    let trajectory = load_trajectory(&cfg.trajectory)?;
    let ms = load_dataset(&cfg.dataset)?;
    if !has_truth_columns(&ms) {
        return Err(Error::Data(format!(
            "{}: dataset lacks truth columns (ue_x, ue_y, path_len_m)",
            cfg.dataset.display()
        )));
    }
    let model;
    let classifier: &(dyn OrderClassifier + Sync) = if cfg.oracle_labels {
        &OracleLabels
    } else {
        model = Ensemble::load(&cfg.model)?;
        &model
    };
    let groups = group_epochs(&ms);
    let baselines = [
        ("strongest2", "strongest-two".to_string(), Baseline::StrongestTwo),
        (
            "rss",
            format!("RSS {} dB", cfg.threshold_db),
            Baseline::RssThreshold(cfg.threshold_db),
        ),
    ];

    let mut report = Report::default();
    let mut comparisons = String::new();
    for rank in 0..2 {
        let gnb = rank + 1;
        let mut emit = |tag: &str, label: String, rows: &[FixRow]| -> Result<()> {
            let mut w = create(&cfg.out_dir.join(format!("fixes_gnb{gnb}_{tag}.csv")))?;
            write_fixes_csv(&mut w, rows)?;
            w.flush()?;
            let errs: Vec<f64> = rows.iter().filter_map(FixRow::error).collect();
            if !errs.is_empty() {
                let mut w = create(&cfg.out_dir.join(format!("cdf_gnb{gnb}_{tag}.csv")))?;
                write_cdf_csv(&mut w, &cdf_points(&errs)?)?;
                w.flush()?;
            }
            report.runs.push(RunSummary::from_rows(label, rows));
            Ok(())
        };
        let mut sbr_rows = None;
        for mode in cfg.mode.modes() {
            let pc = PipelineConfig {
                mode,
                min_crossing_deg: cfg.min_crossing_deg,
            };
            let rows = position_trajectory(&scene, &trajectory, &groups, classifier, rank, Positioner::Pipeline(pc));
            let (tag, name) = mode_tag(mode);
            emit(tag, format!("gNB{gnb} {name}"), &rows)?;
            if mode == Mode::SbrOnly {
                sbr_rows = Some(rows);
            }
        }
        for (tag, name, baseline) in &baselines {
            let pos = Positioner::Baseline {
                baseline: *baseline,
                min_crossing_deg: cfg.min_crossing_deg,
            };
            let rows = position_trajectory(&scene, &trajectory, &groups, classifier, rank, pos);
            emit(tag, format!("gNB{gnb} {name}"), &rows)?;
            if let Some(sbr) = &sbr_rows {
                match compare_runs("SBR pipeline", sbr, name, &rows) {
                    Ok(c) => {
                        let _ = writeln!(
                            comparisons,
                            "\ngNB{gnb}: SBR pipeline vs {name} on {} common fixes",
                            c.n
                        );
                        comparisons.push_str(&c.render_text());
                    }
                    Err(e) => {
                        let _ = writeln!(comparisons, "\ngNB{gnb}: SBR pipeline vs {name}: {e}");
                    }
                }
            }
        }
    }
    let text = format!("{}{comparisons}", report.render_text());
    write_text(&cfg.out_dir.join("report.txt"), &text)?;
    write_text(&cfg.out_dir.join("report.csv"), &report.to_csv())?;
    out.push_str(&text);
    Ok(())
}

pub fn report(
    files: &[std::path::PathBuf],
    csv: Option<&Path>,
    cdf_dir: Option<&Path>,
    compare: bool,
    out: &mut String,
) -> Result<()> {
    let mut runs = Vec::new();
    for f in files {
        let label = f
            .file_stem()
            .map_or_else(|| f.display().to_string(), |s| s.to_string_lossy().into_owned());
        runs.push((label, load_fixes(f)?));
    }
    let report = Report {
        runs: runs
            .iter()
            .map(|(l, rows)| RunSummary::from_rows(l.clone(), rows))
            .collect(),
    };
    out.push_str(&report.render_text());
    if let Some(path) = csv {
        write_text(path, &report.to_csv())?;
    }
    if let Some(dir) = cdf_dir {
        for (label, rows) in &runs {
            let errs: Vec<f64> = rows.iter().filter_map(FixRow::error).collect();
            if errs.is_empty() {
                continue;
            }
            let path = dir.join(format!("cdf_{label}.csv"));
            let mut w = create(&path)?;
            write_cdf_csv(&mut w, &cdf_points(&errs)?)?;
            w.flush().map_err(|e| io_err(&path, e))?;
        }
    }
    if compare {
        let (first_label, first) = &runs[0];
        for (label, rows) in &runs[1..] {
            let c = compare_runs(first_label, first, label, rows)?;
            let _ = writeln!(out, "\n{first_label} vs {label} on {} common fixes", c.n);
            out.push_str(&c.render_text());
        }
    }
    Ok(())
}
