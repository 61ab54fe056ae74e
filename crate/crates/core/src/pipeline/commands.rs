use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{Calibration, PipelineConfig};
use super::svg::{escape, Frame, Svg, PALETTE};
use super::synth::SyntheticData;
use crate::causal::{
    average_te_matrix, degree_histogram, fully_connected_reference, load_graph, save_graph_with_header,
    top_k_reference, windowed_te, CausalGraph,
};
use crate::error::{CgadError, Result};
use crate::evaluation::{segments, EvalReport, LabeledRun};
use crate::forecaster::{load_model_for, predict, save_model_with_header, train, ForecastModel, LossHistory};
use crate::scoring::{
    collective_score, mad_zscore, pot_fit, read_scores, robust_stats, write_scores, zscore_with, PotFit, ScoreSeries,
};
use crate::series::{
    apply_minmax, fit_minmax, load_csv, load_labels, make_windows, split_train_val, write_csv_with_header,
    write_labels_with_header, MultivariateSeries, WindowBatch,
};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CgadError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CgadError::io(path, e))
}

fn comment_block(header: &[String]) -> String {
    header.iter().map(|l| format!("# {l}\n")).collect()
}

fn check_names(what: &str, expected: &[String], found: &[String]) -> Result<()> {
    if expected != found {
        return Err(CgadError::Dimension(format!(
            "{what} has sensors {found:?}, expected {expected:?}"
        )));
    }
    Ok(())
}

/// Writes the synthetic train/test split, test labels and the true graph.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<SyntheticData> {
    let data = cfg.synth.generate()?;
    ensure_dir(&cfg.output_dir)?;
    let header = cfg.artifact_header();
    write_csv_with_header(&cfg.train_path(), &data.train, &header)?;
    write_csv_with_header(&cfg.test_path(), &data.test, &header)?;
    let labels = data.test.labels().expect("generated test series carries labels");
    write_labels_with_header(&cfg.labels_path(), labels, &header)?;
    save_graph_with_header(&data.truth, &cfg.output_dir.join("true_graph.txt"), &header)?;
    Ok(data)
}

/// Causal graph plus the unpruned averaged TE matrix it came from.
#[derive(Debug, Clone)]
pub struct GraphOutput {
    pub graph: CausalGraph,
    pub te: Vec<Vec<f64>>,
}

fn load_normalized_train(cfg: &PipelineConfig) -> Result<(MultivariateSeries, crate::series::NormalizationSpec)> {
    let train = load_csv(&cfg.train_path(), None)?;
    let norm = fit_minmax(&train);
    let scaled = apply_minmax(&train, &norm)?;
    Ok((scaled, norm))
}

/// Builds the TE graph from the normalized training data and writes it with
/// a degree-histogram comparison.
pub fn cmd_build_graph(cfg: &PipelineConfig) -> Result<GraphOutput> {
    let (train, _) = load_normalized_train(cfg)?;
    let te = average_te_matrix(&train, &cfg.graph)?;
    let names = train.sensor_names().to_vec();
    let graph = CausalGraph::from_te_matrix(&te, names.clone(), cfg.graph.prune_threshold)?;
    ensure_dir(&cfg.output_dir)?;
    let header = cfg.artifact_header();
    save_graph_with_header(&graph, &cfg.graph_path(), &header)?;

    let full = fully_connected_reference(&te, names.clone())?;
    let top_k = top_k_reference(&te, names, cfg.report.top_k.min(graph.n_nodes().saturating_sub(1)))?;
    let hists = [degree_histogram(&graph), degree_histogram(&full), degree_histogram(&top_k)];
    let max_degree = graph.n_nodes().saturating_sub(1);
    let mut csv = comment_block(&header);
    csv.push_str("out_degree,te_graph,fully_connected,top_k\n");
    let counts: Vec<[usize; 3]> = (0..=max_degree)
        .map(|d| [0, 1, 2].map(|k| hists[k].get(&d).copied().unwrap_or(0)))
        .collect();
    for (d, c) in counts.iter().enumerate() {
        let _ = writeln!(csv, "{d},{},{},{}", c[0], c[1], c[2]);
    }
    write_text(&cfg.output_dir.join("degree_histogram.csv"), &csv)?;
    write_text(
        &cfg.output_dir.join("degree_histogram.svg"),
        &degree_svg(&counts, &header, cfg.report.top_k),
    )?;
    Ok(GraphOutput { graph, te })
}

fn degree_svg(counts: &[[usize; 3]], header: &[String], top_k: usize) -> String {
    let (w, h) = (640.0, 320.0);
    let mut svg = Svg::new(w, h, header);
    let peak = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let frame = Frame {
        left: 50.0,
        top: 30.0,
        width: 560.0,
        height: 240.0,
        x_min: -0.5,
        x_max: counts.len() as f64 - 0.5,
        y_min: 0.0,
        y_max: peak * 1.05,
    };
    frame.axes(&mut svg, "Out-degree histogram");
    let labels = ["TE graph".to_string(), "fully connected".to_string(), format!("top-{top_k}")];
    let slot = frame.width / counts.len() as f64;
    let bar = slot / 4.0;
    for (d, c) in counts.iter().enumerate() {
        for (k, &v) in c.iter().enumerate() {
            let x = frame.x(d as f64) - 1.5 * bar + k as f64 * bar;
            let y = frame.y(v as f64);
            svg.push(&format!(
                "<rect class=\"bar series{k}\" data-degree=\"{d}\" data-count=\"{v}\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                frame.bottom() - y,
                PALETTE[k]
            ));
        }
        svg.text(frame.x(d as f64), frame.bottom() + 13.0, "middle", &d.to_string());
    }
    for (k, label) in labels.iter().enumerate() {
        let y = 45.0 + 14.0 * k as f64;
        svg.push(&format!("<rect x=\"480\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>", y - 9.0, PALETTE[k]));
        svg.text(495.0, y, "start", label);
    }
    svg.finish()
}

fn all_windows(series: &MultivariateSeries, w: usize, batch: usize) -> Result<WindowBatch> {
    WindowBatch::concat(&make_windows(series, w, batch)?)
        .ok_or_else(|| CgadError::Argument("series too short for one window".into()))
}

/// Trains the forecaster on the graph and the normalized training data.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<(ForecastModel, LossHistory)> {
    let (series, norm) = load_normalized_train(cfg)?;
    let graph = load_graph(&cfg.graph_path())?;
    check_names("training data", &graph.node_names, series.sensor_names())?;
    let (tr, va) = split_train_val(&series, cfg.data.val_fraction)?;
    let w = cfg.model.window_w;
    let tw = all_windows(&tr, w, cfg.train.batch_size)?;
    let vw = all_windows(&va, w, cfg.train.batch_size)?;
    let model = ForecastModel::new(cfg.model.clone(), &graph.adjacency, graph.node_names.clone())?;
    let (mut model, history) = train(model, &tw, &vw, &cfg.train)?;
    model.normalization = Some(norm);
    ensure_dir(&cfg.output_dir)?;
    let header = cfg.artifact_header();
    save_model_with_header(&model, &cfg.model_path(), &header)?;
    let mut csv = comment_block(&header);
    let _ = writeln!(csv, "# best_epoch {}", history.best_epoch + 1);
    csv.push_str(&history.to_csv());
    write_text(&cfg.output_dir.join("loss_history.csv"), &csv)?;
    Ok((model, history))
}

/// `|forecast - actual|` per node, `N x len`.
fn window_errors(model: &ForecastModel, windows: &WindowBatch) -> Result<Vec<Vec<f64>>> {
    let pred = predict(model, windows, 256)?;
    let n = windows.n_sensors;
    Ok((0..n)
        .map(|i| (0..windows.len()).map(|t| (pred[t * n + i] - windows.targets[t * n + i]).abs()).collect())
        .collect())
}

#[derive(Debug, Clone)]
pub struct DetectOutput {
    pub scores: ScoreSeries,
    pub fit: PotFit,
}

/// Scores the test period and writes the score file.
pub fn cmd_detect(cfg: &PipelineConfig) -> Result<DetectOutput> {
    let test = load_csv(&cfg.test_path(), None)?;
    let model = load_model_for(&cfg.model_path(), test.n_sensors())?;
    check_names("test data", &model.node_names, test.sensor_names())?;
    let norm = model
        .normalization
        .clone()
        .ok_or_else(|| CgadError::Format("checkpoint carries no normalization".into()))?;
    let test = apply_minmax(&test, &norm)?;
    let w = model.config.window_w;
    let tw = all_windows(&test, w, 256)?;
    let errors = window_errors(&model, &tw)?;

    let needs_val = cfg.scoring.mad_from_validation || cfg.scoring.calibration == Calibration::Validation;
    let val_errors = if needs_val {
        let train = load_csv(&cfg.train_path(), None)?;
        check_names("training data", &model.node_names, train.sensor_names())?;
        let (_, va) = split_train_val(&apply_minmax(&train, &norm)?, cfg.data.val_fraction)?;
        Some(window_errors(&model, &all_windows(&va, w, 256)?)?)
    } else {
        None
    };
    let scores = match (&val_errors, cfg.scoring.mad_from_validation) {
        (Some(val), true) => {
            let (med, mad) = val.iter().map(|r| robust_stats(r)).unzip();
            zscore_with(&errors, med, mad)?
        }
        _ => mad_zscore(&errors),
    };
    let calibration_scores = match (cfg.scoring.calibration, &val_errors) {
        (Calibration::Validation, Some(val)) => {
            let val_scores = if cfg.scoring.mad_from_validation {
                zscore_with(val, scores.median.clone(), scores.mad.clone())?
            } else {
                mad_zscore(val)
            };
            collective_score(&val_scores.scores)?
        }
        _ => collective_score(&scores.scores)?,
    };
    let fit = pot_fit(&calibration_scores, &cfg.scoring.pot())?;
    let series = ScoreSeries::new(tw.end_times.clone(), model.node_names.clone(), scores, fit.threshold)?;

    ensure_dir(&cfg.output_dir)?;
    let mut header = cfg.artifact_header();
    header.push(format!(
        "calibration {}",
        match cfg.scoring.calibration {
            Calibration::Validation => "validation",
            Calibration::Test => "test",
        }
    ));
    header.push(format!(
        "pot initial_threshold={:e} shape={:e} scale={:e} peaks={} len={} method={:?}",
        fit.initial_threshold, fit.shape, fit.scale, fit.n_peaks, fit.len, fit.method
    ));
    write_scores(&cfg.scores_path(), &series, &header)?;
    Ok(DetectOutput { scores: series, fit })
}

/// Labels of the scored steps; the label file must cover the test period.
fn aligned_labels(scores: &ScoreSeries, labels: &[u8]) -> Result<Vec<u8>> {
    let end = scores.time_index.last().map_or(0, |t| t + 1);
    if labels.len() != end {
        return Err(CgadError::Dimension(format!(
            "label file has {} entries, scores cover a test period of {end} steps",
            labels.len()
        )));
    }
    Ok(scores.time_index.iter().map(|&t| labels[t]).collect())
}

/// Computes the F1 variants of the scored decisions against the labels.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<EvalReport> {
    let scores = read_scores(&cfg.scores_path())?;
    let labels = load_labels(&cfg.labels_path())?;
    let run = LabeledRun::new(scores.decisions.clone(), aligned_labels(&scores, &labels)?)?;
    let report = EvalReport::new(&run);
    ensure_dir(&cfg.output_dir)?;
    let header = comment_block(&cfg.artifact_header());
    write_text(&cfg.output_dir.join("eval_report.txt"), &format!("{header}{}", report.to_text()))?;
    write_text(
        &cfg.output_dir.join("eval_report.csv"),
        &format!("{header}{}\n{}\n", EvalReport::csv_header(), report.to_csv_row()),
    )?;
    Ok(report)
}

/// Writes the enabled SVG views and returns their paths.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let scores = read_scores(&cfg.scores_path())?;
    let labels = aligned_labels(&scores, &load_labels(&cfg.labels_path())?)?;
    let header = cfg.artifact_header();
    ensure_dir(&cfg.output_dir)?;
    let mut written = Vec::new();
    if cfg.report.per_node {
        let path = cfg.output_dir.join("scores_per_node.svg");
        write_text(&path, &per_node_svg(&scores, &labels, &header))?;
        written.push(path);
    }
    if cfg.report.collective {
        let path = cfg.output_dir.join("collective_score.svg");
        write_text(&path, &collective_svg(&scores, &labels, &header))?;
        written.push(path);
    }
    if cfg.report.causal_events {
        let path = cfg.output_dir.join("causal_events.svg");
        write_text(&path, &causal_events_svg(cfg, &header)?)?;
        written.push(path);
    }
    Ok(written)
}

fn label_bands(frame: &Frame, times: &[f64], labels: &[u8]) -> String {
    segments(labels)
        .into_iter()
        .map(|(s, e)| frame.band(times[s] - 0.5, times[e] + 0.5, "#d62728", "anomaly"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn per_node_svg(scores: &ScoreSeries, labels: &[u8], header: &[String]) -> String {
    let times: Vec<f64> = scores.time_index.iter().map(|&t| t as f64).collect();
    let x = (times.first().copied().unwrap_or(0.0), times.last().copied().unwrap_or(1.0));
    let panel = 70.0;
    let n = scores.per_node_scores.len();
    let mut svg = Svg::new(900.0, 40.0 + n as f64 * (panel + 25.0), header);
    for (i, row) in scores.per_node_scores.iter().enumerate() {
        let frame = Frame::fitted(70.0, 30.0 + i as f64 * (panel + 25.0), 800.0, panel, x, row.iter().copied());
        svg.push(&label_bands(&frame, &times, labels));
        svg.push(&frame.line(&times, row, PALETTE[i % PALETTE.len()], "node-score"));
        frame.axes(&mut svg, &format!("anomaly score, sensor {}", scores.node_names[i]));
    }
    svg.finish()
}

fn collective_svg(scores: &ScoreSeries, labels: &[u8], header: &[String]) -> String {
    let times: Vec<f64> = scores.time_index.iter().map(|&t| t as f64).collect();
    let x = (times.first().copied().unwrap_or(0.0), times.last().copied().unwrap_or(1.0));
    let tau = scores.threshold;
    let frame = Frame::fitted(70.0, 30.0, 800.0, 260.0, x, scores.collective.iter().copied().chain([tau]));
    let mut svg = Svg::new(900.0, 330.0, header);
    svg.push(&format!("<g class=\"plot\" {}>", frame.data_attrs()));
    svg.push(&label_bands(&frame, &times, labels));
    svg.push(&frame.line(&times, &scores.collective, "#1f77b4", "collective"));
    let y = frame.y(tau);
    svg.push(&format!(
        "<line class=\"threshold\" data-value=\"{tau:e}\" x1=\"{}\" x2=\"{}\" y1=\"{y}\" y2=\"{y}\" stroke=\"#d62728\" stroke-dasharray=\"6 3\"/>",
        frame.left,
        frame.left + frame.width
    ));
    for (t, &d) in scores.decisions.iter().enumerate() {
        if d == 1 {
            let px = frame.x(times[t]);
            svg.push(&format!(
                "<line class=\"decision\" x1=\"{px:.2}\" x2=\"{px:.2}\" y1=\"{}\" y2=\"{}\" stroke=\"#000\"/>",
                frame.bottom(),
                frame.bottom() + 4.0
            ));
        }
    }
    svg.push("</g>");
    frame.axes(&mut svg, &format!("collective anomaly score, threshold {tau:.3}"));
    svg.finish()
}

/// Source and target of the causal-event view: the configured names, else
/// the heaviest edge of the graph file, else the first two sensors.
fn event_pair(cfg: &PipelineConfig, names: &[String]) -> Result<(usize, usize)> {
    let find = |name: &str| {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CgadError::Config(format!("report sensor {name:?} not in the test data")))
    };
    if let (Some(s), Some(t)) = (&cfg.report.event_source, &cfg.report.event_target) {
        return Ok((find(s)?, find(t)?));
    }
    if let Ok(graph) = load_graph(&cfg.graph_path()) {
        if graph.node_names == names {
            let mut best = None;
            for (i, row) in graph.adjacency.iter().enumerate() {
                for (j, &w) in row.iter().enumerate() {
                    if w > 0.0 && best.is_none_or(|(b, _, _)| w > b) {
                        best = Some((w, j, i));
                    }
                }
            }
            if let Some((_, j, i)) = best {
                return Ok((j, i));
            }
        }
    }
    if names.len() < 2 {
        return Err(CgadError::Config("causal-event view needs two sensors".into()));
    }
    Ok((0, 1))
}

fn causal_events_svg(cfg: &PipelineConfig, header: &[String]) -> Result<String> {
    let test = load_csv(&cfg.test_path(), None)?;
    let names = test.sensor_names().to_vec();
    let (src, tgt) = event_pair(cfg, &names)?;
    let blocks = windowed_te(test.row(tgt), test.row(src), cfg.report.block, cfg.report.top_events, &cfg.graph)?;
    let len = test.len();
    let times: Vec<f64> = (0..len).map(|t| t as f64).collect();
    let x = (0.0, (len - 1) as f64);
    let mut svg = Svg::new(900.0, 520.0, header);
    let mut series_frames = Vec::new();
    for (k, &i) in [src, tgt].iter().enumerate() {
        let frame = Frame::fitted(70.0, 30.0 + k as f64 * 140.0, 800.0, 110.0, x, test.row(i).iter().copied());
        for b in blocks.iter().filter(|b| b.highlighted) {
            svg.push(&frame.band(b.start as f64, b.end as f64 - 1.0, "#ff7f0e", "highlight"));
        }
        svg.push(&frame.line(&times, test.row(i), PALETTE[k], "series"));
        frame.axes(&mut svg, &format!("{} {}", if k == 0 { "source" } else { "target" }, names[i]));
        series_frames.push(frame);
    }
    let target = series_frames[1];
    for b in &blocks {
        for &t in &b.top_events {
            svg.push(&format!(
                "<circle class=\"event\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"#d62728\"/>",
                target.x(t as f64),
                target.y(test.row(tgt)[t])
            ));
        }
    }
    let te_frame = Frame::fitted(70.0, 340.0, 800.0, 140.0, x, blocks.iter().map(|b| b.te).chain([0.0]));
    for (k, b) in blocks.iter().enumerate() {
        let (x0, x1) = (te_frame.x(b.start as f64), te_frame.x(b.end as f64 - 1.0));
        let y = te_frame.y(b.te);
        svg.push(&format!(
            "<rect class=\"block{}\" data-block=\"{k}\" data-te=\"{:e}\" x=\"{x0:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            if b.highlighted { " highlight" } else { "" },
            b.te,
            (x1 - x0).max(1.0),
            (te_frame.y(0.0) - y).max(0.0),
            if b.highlighted { "#ff7f0e" } else { "#aaa" }
        ));
    }
    te_frame.axes(
        &mut svg,
        &format!(
            "transfer entropy {} -> {} per {}-step block (bits)",
            escape(&names[src]),
            escape(&names[tgt]),
            cfg.report.block
        ),
    );
    Ok(svg.finish())
}
