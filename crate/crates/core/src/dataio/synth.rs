//! Synthetic fire-spread samples with spatially smooth, correlated drivers.

use rand_chacha::ChaCha8Rng;

use super::{Container, FeatureStats, Sample, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub count: usize,
    pub h: usize,
    pub w: usize,
    pub seed: u64,
    /// Label is a fixed threshold of the Drought channel.
    pub separable: bool,
    /// Upper bound on fire seeds planted in the previous fire mask.
    pub fire_seeds: usize,
    /// Scale of spontaneous ignition away from existing fire.
    pub ignition_rate: f64,
    /// Probability that a label pixel is marked uncertain.
    pub uncertain_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 200,
            h: 64,
            w: 64,
            seed: 0,
            separable: false,
            fire_seeds: 4,
            ignition_rate: 2e-4,
            uncertain_rate: 0.02,
        }
    }
}

/// Drought value above which the separable label fires.
pub const SEPARABLE_DROUGHT_THRESHOLD: f32 = 1.2;

/// Value noise in `[0, 1]`: uniform lattice values every `cell` pixels,
/// blended with a smoothstep.
fn smooth_field(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: usize) -> Vec<f32> {
    let (gh, gw) = (h.div_ceil(cell) + 2, w.div_ceil(cell) + 2);
    let lattice: Vec<f32> = (0..gh * gw).map(|_| rng.gen::<f32>()).collect();
    let (oy, ox) = (rng.gen::<f32>(), rng.gen::<f32>());
    let ease = |t: f32| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f32 / cell as f32 + oy;
        let (y0, ty) = (fy as usize, ease(fy.fract()));
        for x in 0..w {
            let fx = x as f32 / cell as f32 + ox;
            let (x0, tx) = (fx as usize, ease(fx.fract()));
            let at = |yy: usize, xx: usize| lattice[yy * gw + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bot = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

fn mix(parts: &[(f32, &[f32])], n: usize) -> Vec<f32> {
    (0..n).map(|i| parts.iter().map(|(a, f)| a * f[i]).sum()).collect()
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn sample(cfg: &SynthConfig, index: usize) -> Result<Sample> {
    let (h, w) = (cfg.h, cfg.w);
    let n = h * w;
    let mut rng = rng::stream(cfg.seed, Stream::Synth, index as u64);
    let mut field = |cell: usize| smooth_field(&mut rng, h, w, cell);
    let (e16, e8) = (field(16), field(8));
    let terrain = mix(&[(0.7, &e16), (0.3, &e8)], n);
    let wind_dir_var = field(32);
    let wind_var = field(16);
    let temp_var = field(16);
    let spread_var = field(16);
    let hum_var = field(16);
    let rain_var = field(16);
    let dry_var = field(16);
    let veg_var = field(8);
    let pop_var = field(16);
    let erc_var = field(16);

    let theta0: f32 = rng.gen_range(0.0..360.0);
    let wind0: f32 = rng.gen_range(1.0..8.0);
    let temp0: f32 = rng.gen_range(270.0..295.0);
    let hum0: f32 = rng.gen();
    let raining = rng.gen::<f32>() < 0.3;
    let dry0: f32 = rng.gen();

    let mut f = vec![0.0f32; NUM_FEATURES * n];
    let mut dryness = vec![0.0f32; n];
    let mut spread = vec![0.0f32; n];
    for i in 0..n {
        let elev = 100.0 + 2900.0 * terrain[i];
        let dir = (theta0 + 40.0 * (wind_dir_var[i] - 0.5)).rem_euclid(360.0);
        let vel = wind0 + 3.0 * wind_var[i];
        let tmin = temp0 - 8.0 * terrain[i] + 2.0 * temp_var[i];
        let tmax = tmin + 8.0 + 10.0 * spread_var[i];
        let hum_n = 0.6 * hum0 + 0.4 * hum_var[i];
        let hum = 0.002 + 0.010 * hum_n;
        let rain = if raining { 20.0 * (rain_var[i] - 0.65).max(0.0) } else { 0.0 };
        let z = 0.3 * dry0 + 0.7 * dry_var[i];
        let drought = -6.0 + 10.0 * z;
        let veg_n = 0.8 * terrain[i] + 0.2 * veg_var[i];
        let veg = -0.1 + 0.9 * veg_n;
        let pop = (6.0 * pop_var[i]).exp() - 1.0;
        let temp_n = ((tmax - 265.0) / 45.0).clamp(0.0, 1.0);
        let dry = (4.0 - drought) / 10.0;
        let erc = 100.0 * (0.5 * (1.0 - dry) + 0.3 * temp_n + 0.2 * erc_var[i]);
        for (c, v) in [elev, dir, vel, tmin, tmax, hum, rain, drought, veg, pop, erc].into_iter().enumerate() {
            f[c * n + i] = v;
        }
        dryness[i] = 1.0 - dry;
        let rain_n = (rain / 5.0).min(1.0);
        spread[i] = sigmoid(-3.0 + 3.0 * dryness[i] + 2.5 * veg_n + 0.25 * vel - 2.0 * hum_n - 3.0 * rain_n);
    }

    // previous fire mask: elliptical blobs with ragged edges
    let mut pfm = vec![0.0f32; n];
    let seeds = if cfg.fire_seeds == 0 { 0 } else { 1 + rng::below(&mut rng, cfg.fire_seeds) };
    for _ in 0..seeds {
        let (cy, cx) = (rng.gen_range(0.0..h as f32), rng.gen_range(0.0..w as f32));
        let (ry, rx) = (rng.gen_range(1.0..4.5f32), rng.gen_range(1.0..4.5f32));
        for y in 0..h {
            for x in 0..w {
                let d = ((y as f32 - cy) / ry).powi(2) + ((x as f32 - cx) / rx).powi(2);
                if d <= 1.0 + 0.3 * (rng.gen::<f32>() - 0.5) {
                    pfm[y * w + x] = 1.0;
                }
            }
        }
    }

    // one stochastic automaton step, biased downwind
    let theta = theta0.to_radians();
    let (wy, wx) = (-theta.cos(), theta.sin());
    let mut label = vec![0.0f32; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = if pfm[i] == 1.0 {
                0.55 + 0.4 * spread[i]
            } else {
                let mut survive = 1.0 - (cfg.ignition_rate as f32 * spread[i]).min(1.0);
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let (yy, xx) = (y as i32 - dy, x as i32 - dx);
                        if (dy, dx) == (0, 0) || yy < 0 || xx < 0 || yy >= h as i32 || xx >= w as i32 {
                            continue;
                        }
                        if pfm[yy as usize * w + xx as usize] != 1.0 {
                            continue;
                        }
                        let len = ((dy * dy + dx * dx) as f32).sqrt();
                        let align = (dy as f32 * wy + dx as f32 * wx) / len;
                        let wind = f[2 * n + i] / 11.0;
                        let q = (spread[i] * (0.7 + 0.6 * align * wind)).clamp(0.0, 1.0);
                        survive *= 1.0 - q;
                    }
                }
                1.0 - survive
            };
            if rng.gen::<f32>() < p {
                label[i] = 1.0;
            }
        }
    }
    if cfg.separable {
        for i in 0..n {
            label[i] = if f[7 * n + i] > SEPARABLE_DROUGHT_THRESHOLD { 1.0 } else { 0.0 };
        }
    }
    for i in 0..n {
        if rng.gen::<f64>() < cfg.uncertain_rate {
            label[i] = -1.0;
        }
        if rng.gen::<f64>() < cfg.uncertain_rate / 2.0 && pfm[i] == 0.0 {
            pfm[i] = -1.0;
        }
    }
    f[11 * n..].copy_from_slice(&pfm);
    Sample::new(h, w, f, label)
}

/// Generates `cfg.count` samples; statistics are computed from the result.
pub fn synthesize(cfg: &SynthConfig) -> Result<Container> {
    if cfg.count == 0 {
        return Err(Error::invalid("synthesize needs count >= 1"));
    }
    if cfg.h < 2 || cfg.w < 2 {
        return Err(Error::invalid(format!("grid {}x{} too small", cfg.h, cfg.w)));
    }
    if !(0.0..=1.0).contains(&cfg.uncertain_rate) || !(cfg.ignition_rate >= 0.0) {
        return Err(Error::invalid("uncertain_rate must be in [0, 1] and ignition_rate >= 0"));
    }
    let samples = (0..cfg.count).map(|i| sample(cfg, i)).collect::<Result<Vec<_>>>()?;
    let stats = FeatureStats::from_samples(&samples)?;
    Container::new(cfg.h, cfg.w, stats, samples)
}
