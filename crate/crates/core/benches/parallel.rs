use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use seaslick::detect::{dark_spot_mask, DetectorParams, SlickKind};
use seaslick::gmf::InversionLut;
use seaslick::raster::{IncidenceAngle, SceneMetadata};
use seaslick::simulate::{
    gen_wind_field, render_scene, LookalikeConfig, SlickSpec, Speckle, WindFieldParams,
};
use seaslick::wind::retrieve_wind;

fn scene() -> (seaslick::raster::RasterGrid, seaslick::simulate::WindField, SceneMetadata) {
    let meta = SceneMetadata::new("bench", IncidenceAngle::Ramp { near: 30.0, far: 40.0 }, 1);
    let wind = gen_wind_field(512, 512, 7, &WindFieldParams::default()).unwrap();
    let slick = SlickSpec {
        shape_seed: 3,
        centroid: (256.0, 256.0),
        target_area_hm2: 40.0,
        kind: SlickKind::Spill,
        damping_max_db: 6.0,
    };
    let (sigma0, _) = render_scene(
        &meta,
        &wind,
        &[slick],
        &LookalikeConfig::default(),
        Speckle::default(),
        11,
    )
    .unwrap();
    (sigma0, wind, meta)
}

/// Runs `f` on a pool of `threads` workers, or directly in sequential builds.
fn on_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

fn bench(c: &mut Criterion) {
    let (sigma0, wind, meta) = scene();
    let lut = InversionLut::default_cmod5n();
    let params = DetectorParams::default();
    let max = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut modes = vec![("sequential", 1)];
    if seaslick::par::is_parallel() && max > 1 {
        modes.push(("parallel", max));
    }

    let mut g = c.benchmark_group("scene_512");
    g.sample_size(10);
    for (label, threads) in modes {
        g.bench_with_input(BenchmarkId::new("detect", label), &threads, |b, &t| {
            b.iter(|| on_pool(t, || dark_spot_mask(&sigma0, &params).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("retrieve_wind", label), &threads, |b, &t| {
            b.iter(|| on_pool(t, || retrieve_wind(&sigma0, &wind.direction, &meta, lut).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("render", label), &threads, |b, &t| {
            b.iter(|| {
                on_pool(t, || {
                    render_scene(&meta, &wind, &[], &LookalikeConfig::default(), Speckle::default(), 5)
                        .unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
