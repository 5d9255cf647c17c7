//! Instance matching, pixel metrics, and wind/size binned reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::detect::{instances_from_mask, Connectivity, InstanceSource, SlickInstance};
use crate::error::{Error, Result};
use crate::raster::{write_json, BinaryMask, RasterGrid};
use crate::wind::{slick_neighborhood_wind, NeighborhoodConfig, SlickWindContext};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Detected GT ids with the prediction ids overlapping each.
    pub detected_gt: Vec<(u32, Vec<u32>)>,
    pub missed_gt: Vec<u32>,
    pub false_alarms: Vec<u32>,
    pub min_intersection_px: usize,
}

fn check_unique(instances: &[SlickInstance], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for i in instances {
        if !seen.insert(i.id) {
            return Err(Error::Input(format!("duplicate {what} instance id {}", i.id)));
        }
    }
    Ok(())
}

/// Lenient many-to-many matching: a GT instance is detected when some
/// prediction shares at least `min_intersection_px` pixels with it; a
/// prediction is a false alarm when it reaches that overlap with no GT.
pub fn match_instances(
    gt: &[SlickInstance],
    pred: &[SlickInstance],
    min_intersection_px: usize,
) -> Result<MatchResult> {
    check_unique(gt, "ground-truth")?;
    check_unique(pred, "prediction")?;
    let min_px = min_intersection_px.max(1);
    let owner: HashMap<(u32, u32), usize> = gt
        .iter()
        .enumerate()
        .flat_map(|(k, g)| g.pixels.iter().map(move |&p| (p, k)))
        .collect();

    let mut credited: Vec<Vec<u32>> = vec![Vec::new(); gt.len()];
    let mut false_alarms = Vec::new();
    for p in pred {
        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for px in &p.pixels {
            if let Some(&k) = owner.get(px) {
                *overlap.entry(k).or_default() += 1;
            }
        }
        let mut hit = false;
        for (k, n) in overlap {
            if n >= min_px {
                credited[k].push(p.id);
                hit = true;
            }
        }
        if !hit {
            false_alarms.push(p.id);
        }
    }

    let mut detected_gt = Vec::new();
    let mut missed_gt = Vec::new();
    for (g, mut preds) in gt.iter().zip(credited) {
        if preds.is_empty() {
            missed_gt.push(g.id);
        } else {
            preds.sort_unstable();
            detected_gt.push((g.id, preds));
        }
    }
    detected_gt.sort();
    missed_gt.sort_unstable();
    false_alarms.sort_unstable();
    Ok(MatchResult {
        detected_gt,
        missed_gt,
        false_alarms,
        min_intersection_px: min_px,
    })
}

/// Pixel counts behind IoU; summing them across scenes gives pooled metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub intersection: u64,
    pub union: u64,
    pub gt: u64,
    pub pred: u64,
}

impl PixelCounts {
    pub fn merge(self, o: Self) -> Self {
        Self {
            intersection: self.intersection + o.intersection,
            union: self.union + o.union,
            gt: self.gt + o.gt,
            pred: self.pred + o.pred,
        }
    }

    pub fn metrics(&self) -> PixelMetrics {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        PixelMetrics {
            iou: ratio(self.intersection, self.union),
            iou_defined: self.union > 0,
            well_detected_fraction: ratio(self.intersection, self.gt),
            well_detected_defined: self.gt > 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelMetrics {
    pub iou: f64,
    /// False when the union is empty; `iou` is then reported as 0.
    pub iou_defined: bool,
    pub well_detected_fraction: f64,
    pub well_detected_defined: bool,
}

pub fn pixel_counts(gt: &BinaryMask, pred: &BinaryMask) -> Result<PixelCounts> {
    pred.ensure_dims(gt.dims())?;
    let mut c = PixelCounts::default();
    for (&g, &p) in gt.bits().iter().zip(pred.bits()) {
        c.intersection += (g && p) as u64;
        c.union += (g || p) as u64;
        c.gt += g as u64;
        c.pred += p as u64;
    }
    Ok(c)
}

pub fn pixel_metrics(gt: &BinaryMask, pred: &BinaryMask) -> Result<PixelMetrics> {
    Ok(pixel_counts(gt, pred)?.metrics())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinningSpec {
    pub wind_edges: Vec<f64>,
    pub size_edges: Vec<f64>,
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            wind_edges: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, f64::INFINITY],
            size_edges: vec![0.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Edge {
    Num(f64),
    Text(String),
}

fn ser_edges<S: Serializer>(edges: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<Edge> = edges
        .iter()
        .map(|&e| if e.is_infinite() { Edge::Text("inf".into()) } else { Edge::Num(e) })
        .collect();
    v.serialize(s)
}

fn de_edges<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<Edge>::deserialize(d)?
        .into_iter()
        .map(|e| match e {
            Edge::Num(x) => Ok(x),
            Edge::Text(t) if matches!(t.as_str(), "inf" | "Infinity" | "+inf") => Ok(f64::INFINITY),
            Edge::Text(t) => Err(serde::de::Error::custom(format!("bad bin edge {t:?}"))),
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct BinningRepr {
    #[serde(serialize_with = "ser_edges", deserialize_with = "de_edges")]
    wind_edges: Vec<f64>,
    #[serde(serialize_with = "ser_edges", deserialize_with = "de_edges")]
    size_edges: Vec<f64>,
}

impl Serialize for BinningSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BinningRepr {
            wind_edges: self.wind_edges.clone(),
            size_edges: self.size_edges.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinningSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = BinningRepr::deserialize(d)?;
        Ok(Self {
            wind_edges: r.wind_edges,
            size_edges: r.size_edges,
        })
    }
}

fn edge_label(e: f64) -> String {
    if e.is_infinite() {
        "inf".into()
    } else {
        format!("{e}")
    }
}

impl BinningSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, edges) in [("wind_edges", &self.wind_edges), ("size_edges", &self.size_edges)] {
            if edges.len() < 2 || edges[0] != 0.0 {
                return Err(Error::Config(format!("{name} needs >= 2 edges starting at 0")));
            }
            if edges.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config(format!("{name} must be strictly increasing")));
            }
        }
        Ok(())
    }

    pub fn wind_labels(&self) -> Vec<String> {
        self.wind_edges
            .windows(2)
            .map(|w| format!("[{},{})", edge_label(w[0]), edge_label(w[1])))
            .collect()
    }

    pub fn size_labels(&self) -> Vec<String> {
        self.size_edges
            .windows(2)
            .map(|w| format!("({},{}]", edge_label(w[0]), edge_label(w[1])))
            .collect()
    }

    /// Left-closed, right-open; the last bin also takes everything above.
    pub fn wind_bin(&self, v: f64) -> Option<usize> {
        if !(v >= 0.0) {
            return None;
        }
        let n = self.wind_edges.len() - 1;
        Some((0..n).find(|&k| v < self.wind_edges[k + 1]).unwrap_or(n - 1))
    }

    /// Left-open, right-closed (zero goes to the first bin); the last bin
    /// also takes everything above.
    pub fn size_bin(&self, a: f64) -> Option<usize> {
        if !(a >= 0.0) {
            return None;
        }
        let n = self.size_edges.len() - 1;
        Some((0..n).find(|&k| a <= self.size_edges[k + 1]).unwrap_or(n - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Detected,
    Missed,
    FalseAlarm,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Detected => "detected",
            Outcome::Missed => "missed",
            Outcome::FalseAlarm => "false_alarm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub scene_id: String,
    /// GT id for detected/missed, prediction id for false alarms.
    pub id: u32,
    pub size_hm2: f64,
    pub wind_mps: f64,
    pub outcome: Outcome,
    pub wind_bin: usize,
    pub size_bin: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub detected: u64,
    pub missed: u64,
    pub fa: u64,
}

impl Counts {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Detected => self.detected += 1,
            Outcome::Missed => self.missed += 1,
            Outcome::FalseAlarm => self.fa += 1,
        }
    }

    pub fn merge(self, o: Self) -> Self {
        Self {
            detected: self.detected + o.detected,
            missed: self.missed + o.missed,
            fa: self.fa + o.fa,
        }
    }

    /// `None` when the bin holds no GT instance.
    pub fn detection_rate(&self) -> Option<f64> {
        let n = self.detected + self.missed;
        (n > 0).then(|| self.detected as f64 / n as f64)
    }
}

/// Per-scene partial result; merging is order-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEvaluation {
    pub scene_id: String,
    pub matching: MatchResult,
    pub pixels: PixelCounts,
    pub records: Vec<InstanceRecord>,
}

fn context_map(contexts: &[SlickWindContext]) -> HashMap<u32, f64> {
    contexts
        .iter()
        .map(|c| (c.instance_id, c.mean_neighborhood_speed))
        .collect()
}

/// Attaches size and context wind to every GT outcome and false alarm.
pub fn bin_outcomes(
    scene_id: &str,
    matching: &MatchResult,
    gt: &[SlickInstance],
    pred: &[SlickInstance],
    gt_contexts: &[SlickWindContext],
    fa_contexts: &[SlickWindContext],
    bins: &BinningSpec,
) -> Result<Vec<InstanceRecord>> {
    bins.validate()?;
    let gt_wind = context_map(gt_contexts);
    let fa_wind = context_map(fa_contexts);
    let gt_by_id: HashMap<u32, &SlickInstance> = gt.iter().map(|i| (i.id, i)).collect();
    let pred_by_id: HashMap<u32, &SlickInstance> = pred.iter().map(|i| (i.id, i)).collect();

    let record = |id: u32, inst: Option<&&SlickInstance>, wind: Option<&f64>, outcome: Outcome| {
        let what = if outcome == Outcome::FalseAlarm { "prediction" } else { "ground-truth" };
        let inst = inst.ok_or_else(|| Error::Input(format!("{scene_id}: unknown {what} instance {id}")))?;
        let wind = *wind.ok_or_else(|| {
            Error::Input(format!("{scene_id}: no wind context for {what} instance {id}"))
        })?;
        let wind_bin = bins
            .wind_bin(wind)
            .ok_or_else(|| Error::Input(format!("{scene_id}: invalid wind {wind} for instance {id}")))?;
        let size_bin = bins.size_bin(inst.area_hm2).expect("areas are non-negative");
        Ok::<_, Error>(InstanceRecord {
            scene_id: scene_id.to_string(),
            id,
            size_hm2: inst.area_hm2,
            wind_mps: wind,
            outcome,
            wind_bin,
            size_bin,
        })
    };

    let mut out = Vec::new();
    for (id, _) in &matching.detected_gt {
        out.push(record(*id, gt_by_id.get(id), gt_wind.get(id), Outcome::Detected)?);
    }
    for id in &matching.missed_gt {
        out.push(record(*id, gt_by_id.get(id), gt_wind.get(id), Outcome::Missed)?);
    }
    for id in &matching.false_alarms {
        out.push(record(*id, pred_by_id.get(id), fa_wind.get(id), Outcome::FalseAlarm)?);
    }
    out.sort_by(|a, b| (a.outcome, a.id).cmp(&(b.outcome, b.id)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub min_intersection_px: usize,
    pub connectivity: Connectivity,
    pub neighborhood: NeighborhoodConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            min_intersection_px: 1,
            connectivity: Connectivity::Eight,
            neighborhood: NeighborhoodConfig::default(),
        }
    }
}

/// Full evaluation of one scene from masks and a wind-speed grid. GT context
/// excludes GT pixels; false-alarm context excludes GT and all predictions.
pub fn evaluate_scene(
    scene_id: &str,
    gt_mask: &BinaryMask,
    pred_mask: &BinaryMask,
    wind_speed: &RasterGrid,
    bins: &BinningSpec,
    cfg: &EvalConfig,
) -> Result<SceneEvaluation> {
    let inner = || -> Result<SceneEvaluation> {
        pred_mask.ensure_dims(gt_mask.dims())?;
        if wind_speed.dims() != gt_mask.dims() {
            return Err(Error::DimensionMismatch {
                expected: gt_mask.dims(),
                found: wind_speed.dims(),
            });
        }
        let spacing = wind_speed.pixel_spacing();
        let gt = instances_from_mask(gt_mask, spacing, cfg.connectivity, InstanceSource::GroundTruth);
        let pred = instances_from_mask(pred_mask, spacing, cfg.connectivity, InstanceSource::Baseline);
        let matching = match_instances(&gt, &pred, cfg.min_intersection_px)?;

        let gt_ctx = crate::wind::neighborhood_winds(&gt, wind_speed, gt_mask, &cfg.neighborhood)?;
        let all = gt_mask.union(pred_mask)?;
        let fa: Vec<SlickInstance> = pred
            .iter()
            .filter(|p| matching.false_alarms.binary_search(&p.id).is_ok())
            .cloned()
            .collect();
        let fa_ctx = fa
            .iter()
            .map(|p| slick_neighborhood_wind(p, wind_speed, &all, &cfg.neighborhood))
            .collect::<Result<Vec<_>>>()?;
        let records = bin_outcomes(scene_id, &matching, &gt, &pred, &gt_ctx, &fa_ctx, bins)?;
        Ok(SceneEvaluation {
            scene_id: scene_id.to_string(),
            matching,
            pixels: pixel_counts(gt_mask, pred_mask)?,
            records,
        })
    };
    inner().map_err(|e| e.in_scene(scene_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin: String,
    pub detected: u64,
    pub missed: u64,
    pub fa: u64,
    pub detection_rate: Option<f64>,
    pub fa_count_per_scene: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scene_count: usize,
    pub bins: BinningSpec,
    pub min_intersection_px: usize,
    pub overall: Counts,
    pub wind_bins: Vec<Counts>,
    pub size_bins: Vec<Counts>,
    pub pixels: PixelCounts,
    /// Sorted by (scene_id, outcome, id).
    pub per_instance: Vec<InstanceRecord>,
}

impl EvaluationReport {
    pub fn aggregate(scenes: &[SceneEvaluation], bins: &BinningSpec, min_intersection_px: usize) -> Self {
        let mut wind_bins = vec![Counts::default(); bins.wind_edges.len() - 1];
        let mut size_bins = vec![Counts::default(); bins.size_edges.len() - 1];
        let mut overall = Counts::default();
        let mut pixels = PixelCounts::default();
        let mut per_instance = Vec::new();
        for s in scenes {
            pixels = pixels.merge(s.pixels);
            for r in &s.records {
                overall.add(r.outcome);
                wind_bins[r.wind_bin].add(r.outcome);
                size_bins[r.size_bin].add(r.outcome);
                per_instance.push(r.clone());
            }
        }
        per_instance.sort_by(|a, b| {
            (&a.scene_id, a.outcome, a.id).cmp(&(&b.scene_id, b.outcome, b.id))
        });
        Self {
            scene_count: scenes.len(),
            bins: bins.clone(),
            min_intersection_px,
            overall,
            wind_bins,
            size_bins,
            pixels,
            per_instance,
        }
    }

    fn per_scene(&self, n: u64) -> f64 {
        if self.scene_count == 0 {
            0.0
        } else {
            n as f64 / self.scene_count as f64
        }
    }

    fn summarize(&self, labels: Vec<String>, counts: &[Counts]) -> Vec<BinSummary> {
        labels
            .into_iter()
            .zip(counts)
            .map(|(bin, c)| BinSummary {
                bin,
                detected: c.detected,
                missed: c.missed,
                fa: c.fa,
                detection_rate: c.detection_rate(),
                fa_count_per_scene: self.per_scene(c.fa),
            })
            .collect()
    }

    pub fn wind_summary(&self) -> Vec<BinSummary> {
        self.summarize(self.bins.wind_labels(), &self.wind_bins)
    }

    pub fn size_summary(&self) -> Vec<BinSummary> {
        self.summarize(self.bins.size_labels(), &self.size_bins)
    }

    pub fn summary(&self) -> Summary {
        let gt_total = self.overall.detected + self.overall.missed;
        Summary {
            scene_count: self.scene_count,
            min_intersection_px: self.min_intersection_px,
            detected: self.overall.detected,
            missed: self.overall.missed,
            fa: self.overall.fa,
            detection_rate: self.overall.detection_rate(),
            fa_count_per_scene: self.per_scene(self.overall.fa),
            fa_per_gt_instance: (gt_total > 0).then(|| self.overall.fa as f64 / gt_total as f64),
            pixel_counts: self.pixels,
            pixel_metrics: self.pixels.metrics(),
            bins: self.bins.clone(),
            wind_bins: self.wind_summary(),
            size_bins: self.size_summary(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scene_count: usize,
    pub min_intersection_px: usize,
    pub detected: u64,
    pub missed: u64,
    pub fa: u64,
    pub detection_rate: Option<f64>,
    pub fa_count_per_scene: f64,
    pub fa_per_gt_instance: Option<f64>,
    pub pixel_counts: PixelCounts,
    pub pixel_metrics: PixelMetrics,
    pub bins: BinningSpec,
    pub wind_bins: Vec<BinSummary>,
    pub size_bins: Vec<BinSummary>,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const PER_INSTANCE_FILE: &str = "per_instance.csv";
pub const BINS_WIND_FILE: &str = "bins_wind.csv";
pub const BINS_SIZE_FILE: &str = "bins_size.csv";
pub const EVALUATION_FILE: &str = "evaluation.json";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Internal(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_bins(path: &Path, bins: &[BinSummary]) -> Result<()> {
    write_csv(
        path,
        &["bin", "detected", "missed", "fa"],
        bins.iter().map(|b| {
            vec![b.bin.clone(), b.detected.to_string(), b.missed.to_string(), b.fa.to_string()]
        }),
    )
}

/// Writes `summary.json`, `per_instance.csv`, `bins_wind.csv` and
/// `bins_size.csv` into `dir`.
pub fn write_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&report.summary(), &dir.join(SUMMARY_FILE))?;
    write_csv(
        &dir.join(PER_INSTANCE_FILE),
        &["id", "size_hm2", "wind_mps", "outcome", "scene_id"],
        report.per_instance.iter().map(|r| {
            vec![
                r.id.to_string(),
                format!("{:.6}", r.size_hm2),
                format!("{:.6}", r.wind_mps),
                r.outcome.as_str().to_string(),
                r.scene_id.clone(),
            ]
        }),
    )?;
    write_bins(&dir.join(BINS_WIND_FILE), &report.wind_summary())?;
    write_bins(&dir.join(BINS_SIZE_FILE), &report.size_summary())
}
