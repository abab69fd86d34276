//! Timing/inspection probe for the 96x96 inpainting pipeline at p=2 and p=200.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lipext_core::image_io::RawImage;
use lipext_core::nonlocal::MaskedImage;
use lipext_core::pipeline::{run_inpaint, GraphSpec};
use lipext_core::{Method, PatchGraphParams, PipelineConfig, SigmaPolicy, SolverConfig};

fn texture_rgb(h: usize, w: usize) -> RawImage {
    let mut data = vec![0.0f64; h * w * 3];
    for i in 0..h {
        for j in 0..w {
            let y = i as f64 / (h - 1) as f64;
            let x = j as f64 / (w - 1) as f64;
            let bars_v = if (j / 6) % 2 == 0 { 1.0 } else { 0.0 };
            let bars_d = if ((i + j) / 7) % 2 == 0 { 1.0 } else { 0.0 };
            let check = if ((i / 8) + (j / 8)) % 2 == 0 { 1.0 } else { 0.0 };
            let mut px = [
                0.25 + 0.55 * bars_v,
                0.30 + 0.40 * bars_v,
                0.60 - 0.25 * bars_v,
            ];
            let (cy, cx) = (0.30, 0.68);
            if (y - cy).powi(2) + (x - cx).powi(2) < 0.04 {
                px = [0.85 - 0.55 * bars_d, 0.25 + 0.55 * bars_d, 0.20];
            }
            if (0.55..0.82).contains(&y) && (0.12..0.45).contains(&x) {
                px = [0.15 + 0.65 * check, 0.75 - 0.55 * check, 0.35 + 0.45 * check];
            }
            let base = (i * w + j) * 3;
            data[base..base + 3].copy_from_slice(&px);
        }
    }
    RawImage::new(h, w, 3, data)
}

fn cartoon_rgb(h: usize, w: usize) -> RawImage {
    let mut data = vec![0.0f64; h * w * 3];
    for i in 0..h {
        for j in 0..w {
            let y = i as f64 / (h - 1) as f64;
            let x = j as f64 / (w - 1) as f64;
            let mut px = [0.15 + 0.7 * x, 0.15 + 0.7 * y, 0.5 * (x + y) * 0.7 + 0.15];
            let (cy, cx) = (0.30, 0.68);
            let rad = 0.20;
            if (y - cy).powi(2) + (x - cx).powi(2) < rad * rad {
                px = [0.92, 0.18, 0.12];
            }
            if (0.55..0.82).contains(&y) && (0.12..0.45).contains(&x) {
                px = [0.10, 0.80, 0.30];
            }
            if (y - x).abs() < 0.05 {
                px = [0.95, 0.90, 0.15];
            }
            let base = (i * w + j) * 3;
            data[base..base + 3].copy_from_slice(&px);
        }
    }
    RawImage::new(h, w, 3, data)
}

fn config(
    p_target: f64,
    schedule: Option<Vec<f64>>,
    seed: u64,
    graph: GraphSpec,
    outer_iters: usize,
    out: Option<&str>,
) -> PipelineConfig {
    PipelineConfig {
        method: Method::Plap { p_target },
        outer_iters,
        graph,
        solver: SolverConfig {
            newton_tol: 1e-5,
            linear_tol: 1e-7,
            linear_max_iters: 250,
            max_newton_iters: 150,
            schedule,
            ..SolverConfig::default()
        },
        seed,
        output_dir: out.map(PathBuf::from),
        report_llex_top: 5,
    }
}

fn main() {
    let (h, w) = (96usize, 96usize);
    let seed = 101u64;
    let tex = texture_rgb(h, w);
    let cart = cartoon_rgb(h, w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let known: Vec<bool> = (0..h * w).map(|_| rng.random::<f64>() < 0.10).collect();
    let m_tex = MaskedImage::new(&tex, known.clone()).unwrap();
    let m_cart = MaskedImage::new(&cart, known).unwrap();

    let fixed = PatchGraphParams {
        r: 3,
        search_radius: 10,
        top_k: 12,
        c: 9.0,
        sigma_policy: SigmaPolicy::Fixed { sigma: 0.7 },
        ..PatchGraphParams::default()
    };
    let knn = PatchGraphParams {
        r: 3,
        search_radius: 10,
        top_k: 12,
        c: 9.0,
        sigma_policy: SigmaPolicy::Knn { k: 12 },
        ..PatchGraphParams::default()
    };
    let lad = vec![2.0, 5.0, 10.0, 20.0, 40.0, 60.0, 90.0, 135.0, 200.0];

    let cases: Vec<(&str, &MaskedImage, &RawImage, PatchGraphParams, Option<Vec<f64>>)> = vec![
        ("cart_knn_p2", &m_cart, &cart, knn.clone(), Some(vec![2.0])),
        ("cart_knn_p200", &m_cart, &cart, knn.clone(), Some(lad.clone())),
        ("tex_fix_p2", &m_tex, &tex, fixed.clone(), Some(vec![2.0])),
        ("tex_fix_p200", &m_tex, &tex, fixed.clone(), Some(lad.clone())),
    ];
    for (name, masked, reference, params, schedule) in cases {
        let p_target = *schedule.as_ref().unwrap().last().unwrap();
        let out = format!("/tmp/look/{name}");
        std::fs::create_dir_all(&out).unwrap();
        let cfg = config(
            p_target,
            schedule,
            seed,
            GraphSpec::Patch(params),
            5,
            Some(&out),
        );
        let t0 = Instant::now();
        match run_inpaint(&cfg, masked, Some(reference)) {
            Ok(rep) => {
                let per: Vec<String> = rep
                    .iterations
                    .iter()
                    .map(|it| {
                        format!(
                            "s{}[{:.2} dB res {:.1e}]",
                            it.iter,
                            it.psnr.unwrap_or(f64::NAN),
                            it.residual
                        )
                    })
                    .collect();
                println!(
                    "{name:>14}: {:7.1}s psnr {:.3} dB | {}",
                    t0.elapsed().as_secs_f64(),
                    rep.psnr.unwrap_or(f64::NAN),
                    per.join(" ")
                );
            }
            Err(e) => println!(
                "{name:>14}: {:7.1}s ERROR {e}",
                t0.elapsed().as_secs_f64()
            ),
        }
    }
    println!("probe done");
}
