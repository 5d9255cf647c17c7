//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seaslick::detect::{
    instances_from_mask, label_components, Connectivity, InstanceSource,
    SlickInstance, SlickKind,
};
use seaslick::evaluate::{
    bin_outcomes, match_instances, BinningSpec, Counts, EvalConfig, EvaluationReport, Outcome,
    SceneEvaluation,
};
use seaslick::gmf::{forward, invert_speed, GmfInputs, InversionFlag};
use seaslick::pipeline::{self, DetectArgs, EvaluateArgs, SplitMode, TileArgs};
use seaslick::raster::{to_db, BinaryMask, IncidenceAngle, RasterGrid, SceneMetadata};
use seaslick::simulate::{
    damping_contrast, gen_dataset, render_scene, DatasetConfig, LookalikeConfig, SlickSpec,
    Speckle, WindField,
};
use seaslick::wind::{slick_neighborhood_wind, NeighborhoodConfig, SlickWindContext};

type Outcome_ = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome_ {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gmf_round_trip() -> Outcome_ {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let v = rng.random_range(1.0..=20.0);
        let phi = rng.random_range(0.0..360.0);
        let th = rng.random_range(20.0..=45.0);
        let s = forward(&GmfInputs::new(v, phi, th).unwrap()).unwrap();
        let inv = invert_speed(s, phi, th).unwrap();
        if inv.flag != InversionFlag::Ok {
            return Err(format!("flag {:?} at v={v} phi={phi} theta={th}", inv.flag));
        }
        worst = worst.max((inv.speed - v).abs());
    }
    let el = t.elapsed();
    check(
        worst <= 0.01 && within(el, 5.0),
        format!("max |error| {worst:.2e} m/s, {el:.2?}"),
    )
}

fn gmf_monotone_symmetric() -> Outcome_ {
    let f = |v: f64, phi: f64, th: f64| forward(&GmfInputs::new(v, phi, th).unwrap()).unwrap().value();
    let mut points = 0;
    let mut mono = 0;
    let mut sym = 0;
    for it in 0..25 {
        let th = 20.0 + 25.0 * it as f64 / 24.0;
        for ip in 0..20 {
            let phi = 360.0 * ip as f64 / 20.0 + 3.0;
            let mut prev = f64::NEG_INFINITY;
            for iv in 0..20 {
                let v = 1.0 + 19.0 * iv as f64 / 19.0;
                let s = f(v, phi, th);
                points += 1;
                if !(s > prev) {
                    mono += 1;
                }
                if s != f(v, 360.0 - phi, th) {
                    sym += 1;
                }
                prev = s;
            }
        }
    }
    check(
        points == 10_000 && mono == 0 && sym == 0,
        format!("{points} points, {mono} monotonicity and {sym} symmetry violations"),
    )
}

/// BFS flood fill; labels in raster order of each component's first pixel.
fn flood_fill(mask: &BinaryMask, conn: Connectivity) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            let (r, c) = ((i / w) as i64, (i % w) as i64);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if (dr == 0 && dc == 0) || (conn == Connectivity::Four && dr != 0 && dc != 0) {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if mask.bits()[j] && labels[j] == 0 {
                        labels[j] = next;
                        q.push_back(j);
                    }
                }
            }
        }
    }
    labels
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    let p = rng.random_range(0.2..0.7);
    let bits = (0..w * h).map(|_| rng.random_bool(p)).collect();
    BinaryMask::from_bits(w, h, bits).unwrap()
}

fn labeling_oracle() -> Outcome_ {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = Instant::now();
    let mut mismatches = 0;
    for k in 0..100 {
        let m = random_mask(&mut rng, 64, 64);
        let conn = if k % 2 == 0 { Connectivity::Eight } else { Connectivity::Four };
        let (labels, _) = label_components(&m, conn);
        if labels != flood_fill(&m, conn) {
            mismatches += 1;
        }
    }
    let el = t.elapsed();
    check(
        mismatches == 0 && within(el, 2.0),
        format!("{mismatches} mismatching masks of 100, {el:.2?}"),
    )
}

fn blob_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, n: usize) -> BinaryMask {
    let mut m = BinaryMask::new(w, h);
    for _ in 0..n {
        let (cr, cc) = (rng.random_range(0..h) as i64, rng.random_range(0..w) as i64);
        let (a, b) = (rng.random_range(1..10) as i64, rng.random_range(1..10) as i64);
        for r in (cr - a).max(0)..(cr + a).min(h as i64) {
            for c in (cc - b).max(0)..(cc + b).min(w as i64) {
                let (dr, dc) = ((r - cr) as f64 / a as f64, (c - cc) as f64 / b as f64);
                if dr * dr + dc * dc <= 1.0 {
                    m.set(r as usize, c as usize, true);
                }
            }
        }
    }
    m
}

fn matching_oracle(gt: &[SlickInstance], pred: &[SlickInstance]) -> (Vec<u32>, Vec<u32>, Vec<u32>) {
    let overlap = |a: &SlickInstance, b: &SlickInstance| a.pixels.iter().any(|p| b.pixels.contains(p));
    let det = gt.iter().filter(|g| pred.iter().any(|p| overlap(g, p))).map(|g| g.id).collect();
    let miss = gt.iter().filter(|g| !pred.iter().any(|p| overlap(g, p))).map(|g| g.id).collect();
    let fa = pred.iter().filter(|p| !gt.iter().any(|g| overlap(g, p))).map(|p| p.id).collect();
    (det, miss, fa)
}

fn matching_equivalence() -> Outcome_ {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bins = BinningSpec::default();
    let t = Instant::now();
    let mut mismatches = 0;
    let mut scenes = Vec::new();
    for s in 0..50 {
        let n_gt = rng.random_range(0..8);
        let gt_mask = blob_mask(&mut rng, 128, 128, n_gt);
        let n_pred = rng.random_range(0..10);
        let pred_mask = blob_mask(&mut rng, 128, 128, n_pred);
        let gt = instances_from_mask(&gt_mask, 10.0, Connectivity::Eight, InstanceSource::GroundTruth);
        let pred = instances_from_mask(&pred_mask, 10.0, Connectivity::Eight, InstanceSource::Imported);
        let m = match_instances(&gt, &pred, 1).unwrap();
        let (det, miss, fa) = matching_oracle(&gt, &pred);
        let got: Vec<u32> = m.detected_gt.iter().map(|d| d.0).collect();
        if got != det || m.missed_gt != miss || m.false_alarms != fa {
            mismatches += 1;
        }
        if m.detected_gt.len() + m.missed_gt.len() != gt.len() {
            return Err(format!("scene {s}: GT partition broken"));
        }
        let ctx = |i: &SlickInstance, rng: &mut ChaCha8Rng| SlickWindContext {
            instance_id: i.id,
            mean_neighborhood_speed: rng.random_range(0.0..9.0),
            neighborhood_pixel_count: 1,
            radius_m: 50.0,
        };
        let gctx: Vec<_> = gt.iter().map(|i| ctx(i, &mut rng)).collect();
        let pctx: Vec<_> = pred.iter().map(|i| ctx(i, &mut rng)).collect();
        let records = bin_outcomes(&format!("s{s}"), &m, &gt, &pred, &gctx, &pctx, &bins).unwrap();
        scenes.push(SceneEvaluation {
            scene_id: format!("s{s}"),
            matching: m,
            pixels: Default::default(),
            records,
        });
    }
    let r = EvaluationReport::aggregate(&scenes, &bins, 1);
    let sum = |c: &[Counts]| c.iter().fold(Counts::default(), |a, b| a.merge(*b));
    let conserved = sum(&r.wind_bins) == r.overall && sum(&r.size_bins) == r.overall;
    let el = t.elapsed();
    check(
        mismatches == 0 && conserved && within(el, 10.0),
        format!("{mismatches} oracle mismatches of 50 scenes, bins conserved: {conserved}, {el:.2?}"),
    )
}

fn neighborhood_wind() -> Outcome_ {
    let (w, h) = (41, 41);
    let speed = RasterGrid::from_fn(w, h, |_, c| c as f32).unwrap();
    let mut m = BinaryMask::new(w, h);
    // Near the left edge so the disk is clipped and the mean is not the centre column.
    m.set(20, 2, true);
    let inst = &instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::GroundTruth)[0];
    let cfg = NeighborhoodConfig::default();
    let got = slick_neighborhood_wind(inst, &speed, &m, &cfg).unwrap().mean_neighborhood_speed;
    let (mut sum, mut n) = (0.0, 0);
    for r in 0..h {
        for c in 0..w {
            let (dr, dc) = (r as f64 - 20.0, c as f64 - 2.0);
            if (r, c) != (20, 2) && dr * dr + dc * dc <= 25.0 {
                sum += c as f64;
                n += 1;
            }
        }
    }
    let want = sum / n as f64;
    let rel = (got - want).abs() / want;
    let uniform = RasterGrid::filled(w, h, 4.75).unwrap();
    let u = slick_neighborhood_wind(inst, &uniform, &m, &cfg).unwrap().mean_neighborhood_speed;
    check(
        rel <= 1e-6 && u == 4.75,
        format!("disk mean {got} vs oracle {want} (rel {rel:.1e}); uniform field gives {u}"),
    )
}

fn constant_meta() -> SceneMetadata {
    SceneMetadata::new("acc", IncidenceAngle::Constant { degrees: 35.0 }, 0)
}

fn speckle_statistics() -> Outcome_ {
    let wind = WindField::uniform(512, 512, 6.0, 30.0).unwrap();
    let (s, _) = render_scene(
        &constant_meta(),
        &wind,
        &[],
        &LookalikeConfig::default(),
        Speckle::Gamma { looks: 4.4 },
        99,
    )
    .unwrap();
    let v: Vec<f64> = s.values().iter().map(|&x| x as f64).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x / mean - 1.0).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let target = 1.0 / 4.4;
    let rel = (var - target).abs() / target;
    check(
        v.len() >= 100_000 && rel <= 0.10,
        format!("{} px, normalized variance {var:.4} vs {target:.4} ({:.1}% off)", v.len(), rel * 100.0),
    )
}

fn contrast_window() -> Outcome_ {
    let mut details = Vec::new();
    let mut ok = true;
    for (v, knot) in [(1.0, 0.0), (4.5, -6.0), (12.0, 0.0)] {
        let wind = WindField::uniform(128, 128, v, 0.0).unwrap();
        let slick = SlickSpec {
            shape_seed: 5,
            centroid: (64.0, 64.0),
            target_area_hm2: 10.0,
            kind: SlickKind::Spill,
            damping_max_db: 6.0,
        };
        let (s, gt) = render_scene(&constant_meta(), &wind, &[slick], &LookalikeConfig::default(), Speckle::Off, 1)
            .unwrap();
        let (mut inside, mut outside) = ((0.0, 0), (0.0, 0));
        for (i, &x) in s.values().iter().enumerate() {
            if gt.semantic_mask.bits()[i] {
                inside = (inside.0 + x as f64, inside.1 + 1);
            } else {
                outside = (outside.0 + x as f64, outside.1 + 1);
            }
        }
        let ratio = to_db((inside.0 / inside.1 as f64) / (outside.0 / outside.1 as f64));
        let model = -damping_contrast(v, 6.0);
        ok &= (ratio - model).abs() <= 0.3 && (ratio - knot).abs() <= 0.3;
        details.push(format!("v={v}: {ratio:+.2} dB"));
    }
    check(ok, details.join(", "))
}

fn wind_binned_shape() -> Outcome_ {
    let cfg = DatasetConfig::from_path(&configs_dir().join("wind_suite.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let t = Instant::now();
    gen_dataset(&cfg, cfg.seed.unwrap_or(0), &root.join("data")).unwrap();
    pipeline::run_wind(&root.join("data"), &root.join("wind")).unwrap();
    pipeline::run_detect(&DetectArgs {
        scene: root.join("data"),
        params: None,
        out: root.join("pred"),
    })
    .unwrap();
    let r = pipeline::run_evaluate(&EvaluateArgs {
        gt: root.join("data"),
        pred: root.join("pred"),
        wind: root.join("wind"),
        bins: None,
        config: EvalConfig::default(),
        out: root.join("eval"),
    })
    .unwrap();
    let el = t.elapsed();
    let bins = r.wind_summary();
    let low = bins[0].detection_rate;
    let mid = bins[3].detection_rate;
    let fa: Vec<_> = r.per_instance.iter().filter(|x| x.outcome == Outcome::FalseAlarm).collect();
    let calm = fa.iter().filter(|x| x.wind_mps < 2.0).count() as f64 / fa.len().max(1) as f64;
    check(
        cfg.scene_count == 50
            && matches!(low, Some(x) if x < 0.10)
            && matches!(mid, Some(x) if x > 0.85)
            && !fa.is_empty()
            && calm >= 0.70
            && within(el, 300.0),
        format!(
            "{} [0,1) rate {:?} (n={}), [3,4) rate {:?} (n={}), {} FA with {:.1}% below 2 m/s, {el:.1?}",
            cfg.scene_count,
            low,
            bins[0].detected + bins[0].missed,
            mid,
            bins[3].detected + bins[3].missed,
            fa.len(),
            calm * 100.0
        ),
    )
}

fn dataset_imbalance() -> Outcome_ {
    let cfg = DatasetConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let m = gen_dataset(&cfg, 42, dir.path()).unwrap();
    let r = m.slick_pixel_ratio;
    check(
        (0.024..=0.044).contains(&r),
        format!("{} scenes, slick pixel ratio {:.2}%", m.scene_count, r * 100.0),
    )
}

fn full_run(root: &Path) {
    let cfg_path = root.join("config.json");
    std::fs::write(
        &cfg_path,
        r#"{"scene_count": 6, "width": 256, "height": 256,
            "wind": {"mean_speed": [0.5, 8.0], "pockets": [0, 1], "pocket_area_hm2": [50.0, 120.0],
                     "pocket_noise_std": 0.4},
            "slicks": {"count": [1, 3], "area_hm2": [1.0, 40.0]}}"#,
    )
    .unwrap();
    pipeline::run_simulate(&cfg_path, &root.join("data"), Some(77)).unwrap();
    pipeline::run_wind(&root.join("data"), &root.join("wind")).unwrap();
    pipeline::run_detect(&DetectArgs {
        scene: root.join("data"),
        params: None,
        out: root.join("pred"),
    })
    .unwrap();
    pipeline::run_evaluate(&EvaluateArgs {
        gt: root.join("data"),
        pred: root.join("pred"),
        wind: root.join("wind"),
        bins: None,
        config: EvalConfig::default(),
        out: root.join("eval"),
    })
    .unwrap();
    pipeline::run_tile(&TileArgs {
        input: root.join("data"),
        out: root.join("tiles"),
        ratios: (0.85, 0.15),
        seed: 3,
        size: 128,
        stride: 128,
        mode: SplitMode::Scene,
    })
    .unwrap();
}

fn determinism() -> Outcome_ {
    let max = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, threads) in dirs.iter().zip([1, max, max]) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| full_run(d.path()));
    }
    let files = [
        "eval/summary.json",
        "eval/per_instance.csv",
        "eval/bins_wind.csv",
        "eval/bins_size.csv",
        "data/manifest.json",
        "tiles/tiles.json",
    ];
    let mut differing = Vec::new();
    for f in files {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        for d in &dirs[1..] {
            if std::fs::read(d.path().join(f)).unwrap() != a {
                differing.push(f);
            }
        }
    }
    check(
        differing.is_empty(),
        format!("threads 1 vs {max} (x2): differing files {differing:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome_); 10] = [
        ("GMF round trip", gmf_round_trip),
        ("GMF monotonicity and symmetry", gmf_monotone_symmetric),
        ("connected components vs flood fill", labeling_oracle),
        ("instance matching vs pairwise oracle", matching_equivalence),
        ("neighborhood wind vs disk oracle", neighborhood_wind),
        ("speckle statistics", speckle_statistics),
        ("contrast window", contrast_window),
        ("wind-binned detection shape", wind_binned_shape),
        ("dataset imbalance", dataset_imbalance),
        ("determinism across thread counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let res = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match res {
            Ok(d) => println!("criterion {:2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:2} FAIL  {name}: {d}", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
