//! Randomized property checks shared by the per-module suites and the
//! acceptance target. Each check builds its case from a seed and returns a
//! description of the first violation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srmt::gradcam::{Grid, Heatmap};
use srmt::network::Prediction;
use srmt::sensitivity::{self, enumerate_rectangles, Fusion, RectRegion, SensitiveMask};
use srmt::transforms::{apply_transform, TransformKind, TransformParams, TransformSpec};
use srmt::Tensor;

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Heat-map value drawn so that exact hits on round thresholds are common.
fn heat_value(rng: &mut ChaCha8Rng) -> f32 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..=10) as f32 / 10.0,
        1 => 0.0,
        _ => rng.gen_range(0.0f32..=1.0),
    }
}

/// A random stack of per-class heat maps with a matching prediction.
pub fn random_stack(seed: u64) -> (Vec<Heatmap>, Prediction) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.gen_range(1..=6);
    let (h, w) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
    let maps = (0..classes)
        .map(|c| Heatmap {
            class_index: c,
            grid: Grid::new(h, w, (0..h * w).map(|_| heat_value(&mut rng)).collect()).unwrap(),
        })
        .collect();
    let mut probs: Vec<f32> = (0..classes).map(|_| rng.gen_range(1..5) as f32).collect();
    let total: f32 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let prediction = Prediction {
        logits: probs.iter().map(|p| p.ln()).collect(),
        best_class: 0,
        probabilities: probs,
        target_feature_maps: Tensor::zeros(vec![1, 1, 1]),
    };
    (maps, prediction)
}

fn brute_force(maps: &[Heatmap], pick: impl Fn(&[f32]) -> f32, t: f32) -> Vec<bool> {
    let n = maps[0].grid.values.len();
    (0..n)
        .map(|p| {
            let vals: Vec<f32> = maps.iter().map(|m| m.grid.values[p]).collect();
            t <= pick(&vals)
        })
        .collect()
}

/// Max/avg/best masks against set-builder evaluation, monotonicity in t, the
/// avg ⊆ max and best ⊆ max containments, and the single-class collapse.
pub fn check_selection(seed: u64) -> Check {
    let (maps, pred) = random_stack(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut ts = [heat_value(&mut rng), heat_value(&mut rng)];
    ts.sort_by(f32::total_cmp);
    let [t1, t2] = ts;

    // lowest index among maximal probabilities
    let mut best = 0;
    for (i, p) in pred.probabilities.iter().enumerate() {
        if *p > pred.probabilities[best] {
            best = i;
        }
    }
    let mut masks: Vec<[SensitiveMask; 3]> = Vec::new();
    for t in [t1, t2] {
        let max = sensitivity::select(&maps, &pred, Fusion::Max, t).map_err(|e| e.to_string())?;
        let avg = sensitivity::select(&maps, &pred, Fusion::Avg, t).map_err(|e| e.to_string())?;
        let bst = sensitivity::select(&maps, &pred, Fusion::Best, t).map_err(|e| e.to_string())?;
        let want_max = brute_force(&maps, |v| v.iter().cloned().fold(f32::MIN, f32::max), t);
        let want_avg = brute_force(&maps, |v| v.iter().sum::<f32>() / v.len() as f32, t);
        let want_best = brute_force(&maps[best..=best], |v| v[0], t);
        ensure(max.cells == want_max, || format!("seed {seed}: max mask differs from set-builder at t={t}"))?;
        ensure(avg.cells == want_avg, || format!("seed {seed}: avg mask differs from set-builder at t={t}"))?;
        ensure(bst.cells == want_best, || format!("seed {seed}: best mask differs from set-builder at t={t}"))?;
        ensure(avg.is_subset_of(&max), || format!("seed {seed}: avg ⊄ max at t={t}"))?;
        ensure(bst.is_subset_of(&max), || format!("seed {seed}: best ⊄ max at t={t}"))?;
        if maps.len() == 1 {
            ensure(max.cells == avg.cells && avg.cells == bst.cells, || {
                format!("seed {seed}: single-class fusions disagree")
            })?;
        }
        masks.push([max, avg, bst]);
    }
    for k in 0..3 {
        ensure(masks[1][k].is_subset_of(&masks[0][k]), || {
            format!("seed {seed}: mask at t={t2} not within mask at t={t1}")
        })?;
    }
    Ok(())
}

/// A random mask with a random density.
pub fn random_mask(rng: &mut ChaCha8Rng) -> SensitiveMask {
    let (h, w) = (rng.gen_range(1..=40), rng.gen_range(1..=40));
    let density: f64 = rng.gen_range(0.0..=1.0);
    SensitiveMask {
        height: h,
        width: w,
        cells: (0..h * w).map(|_| rng.gen_bool(density)).collect(),
        method: Fusion::Max,
        threshold: 0.9,
    }
}

/// Exhaustive scan of every pixel, keeping those that qualify as anchors.
pub fn enumerate_oracle(mask: &SensitiveMask, width: usize, height: usize, stride: usize) -> Vec<RectRegion> {
    let mut out = Vec::new();
    for r in 0..mask.height {
        for c in 0..mask.width {
            let on_grid = r % stride == 0 && c % stride == 0;
            let fits = r + height <= mask.height && c + width <= mask.width;
            if mask.cells[r * mask.width + c] && on_grid && fits {
                out.push(RectRegion {
                    top: r,
                    left: c,
                    height,
                    width,
                });
            }
        }
    }
    out
}

/// enumerate_rectangles against the oracle for strides {1,3,5} and rect
/// sizes {1×1, 10×10, 7×3} (width × height) on one random mask.
pub fn check_geometry(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = random_mask(&mut rng);
    for stride in [1, 3, 5] {
        for (w, h) in [(1, 1), (10, 10), (7, 3)] {
            let got = enumerate_rectangles(&mask, w, h, stride);
            if w > mask.width || h > mask.height {
                let name = got.as_ref().map_err(|e| e.name()).err();
                ensure(name == Some("RectLargerThanImage"), || {
                    format!("seed {seed}: oversized rect gave {name:?}")
                })?;
                continue;
            }
            let got = got.map_err(|e| e.to_string())?;
            ensure(got == enumerate_oracle(&mask, w, h, stride), || {
                format!("seed {seed}: stride {stride} rect {w}x{h} differs from oracle")
            })?;
            for r in &got {
                ensure(mask.get(r.top, r.left) && r.fits(mask.height, mask.width), || {
                    format!("seed {seed}: bad rectangle {r:?}")
                })?;
            }
        }
    }
    Ok(())
}

pub fn random_image(rng: &mut ChaCha8Rng) -> Tensor {
    let c = if rng.gen_bool(0.5) { 1 } else { 3 };
    let (h, w) = (rng.gen_range(1..=24), rng.gen_range(1..=24));
    Tensor::new(vec![c, h, w], (0..c * h * w).map(|_| rng.gen_range(0.0f32..=1.0)).collect()).unwrap()
}

pub fn random_rect(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RectRegion {
    let (rh, rw) = (rng.gen_range(1..=h), rng.gen_range(1..=w));
    RectRegion {
        top: rng.gen_range(0..=h - rh),
        left: rng.gen_range(0..=w - rw),
        height: rh,
        width: rw,
    }
}

fn run(img: &Tensor, rect: &RectRegion, spec: &TransformSpec, stream: u64) -> Tensor {
    apply_transform(img, rect, spec, &mut ChaCha8Rng::seed_from_u64(stream)).unwrap()
}

/// Locality, range, determinism and the per-kind algebraic identities on one
/// random image and rectangle.
///
/// `1 − (1 − v)` is exact in binary floating point only when `1 − v` is
/// representable, so the involution is checked bit-for-bit on a dyadic copy
/// of the image (values k/256) and to within 2⁻²⁴ on the original values.
pub fn check_transforms(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = random_image(&mut rng);
    let (c, h, w) = img.chw().unwrap();
    let rect = random_rect(&mut rng, h, w);
    let stream = rng.gen();

    for kind in TransformKind::ALL {
        let spec = TransformSpec::new(kind);
        let out = run(&img, &rect, &spec, stream);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let (a, b) = (img.at3(ch, y, x), out.at3(ch, y, x));
                    if !rect.contains(y, x) {
                        ensure(a.to_bits() == b.to_bits(), || format!("seed {seed}: {kind} touched ({y},{x})"))?;
                    }
                    ensure((0.0..=1.0).contains(&b), || format!("seed {seed}: {kind} left range: {b}"))?;
                }
            }
        }
        ensure(run(&img, &rect, &spec, stream) == out, || format!("seed {seed}: {kind} not deterministic"))?;
    }

    let invert = TransformSpec::new(TransformKind::Invert);
    let twice = run(&run(&img, &rect, &invert, stream), &rect, &invert, stream);
    let drift = img.data().iter().zip(twice.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    ensure(drift <= f32::EPSILON / 2.0, || format!("seed {seed}: invert twice drifts by {drift}"))?;
    let dyadic = img.map(|v| (v * 256.0).floor().min(256.0) / 256.0);
    let twice = run(&run(&dyadic, &rect, &invert, stream), &rect, &invert, stream);
    ensure(twice == dyadic, || format!("seed {seed}: invert twice is not the identity"))?;

    let hole = TransformSpec::new(TransformKind::Hole);
    let once = run(&img, &rect, &hole, stream);
    ensure(run(&once, &rect, &hole, stream) == once, || format!("seed {seed}: hole not idempotent"))?;

    let unit = TransformSpec {
        kind: TransformKind::Brightness,
        params: TransformParams {
            brightness_factor: 1.0,
            ..TransformParams::default()
        },
    };
    ensure(run(&img, &rect, &unit, stream) == img, || format!("seed {seed}: brightness 1.0 changed the image"))?;

    let level = rng.gen_range(0.0f32..=1.0);
    let constant = Tensor::filled(vec![c, h, w], level);
    let blurred = run(&constant, &rect, &TransformSpec::new(TransformKind::Blur), stream);
    let dev = blurred.data().iter().map(|v| (v - level).abs()).fold(0.0, f32::max);
    ensure(dev <= 1e-6, || format!("seed {seed}: blur moved a constant region by {dev}"))?;

    let noise = TransformSpec::new(TransformKind::GaussianNoise);
    ensure(run(&img, &rect, &noise, stream) == run(&img, &rect, &noise, stream), || {
        format!("seed {seed}: noise differs under the same stream")
    })?;
    let silent = TransformSpec {
        kind: TransformKind::GaussianNoise,
        params: TransformParams {
            noise_sigma: 0.0,
            ..TransformParams::default()
        },
    };
    ensure(run(&img, &rect, &silent, stream) == img, || format!("seed {seed}: zero-sigma noise changed the image"))?;
    Ok(())
}
