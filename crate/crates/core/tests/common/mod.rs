#![allow(dead_code)]

use firecast::rng::{self, Rng, Stream};
use firecast::tensor::ops::{AttentionLayout, NormMode, RunningStats};
use firecast::tensor::{Tape, Tensor, Var};
use firecast::Result;

pub const FD_EPS: f32 = 1e-3;
pub const SEEDS_PER_OP: u64 = 10;

pub struct GradStats {
    pub op: &'static str,
    pub checked: usize,
    pub max_rel: f64,
    pub median_rel: f64,
}

fn uniform(seed: u64, k: u64, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let mut r = rng::stream(seed, Stream::Synth, 1000 + k);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| lo + (hi - lo) * r.gen::<f32>()).collect()).unwrap()
}

/// Values bounded away from zero, so ReLU-like kinks sit outside `±ε`.
fn away_from_zero(seed: u64, k: u64, shape: &[usize]) -> Tensor {
    let mut t = uniform(seed, k, shape, -1.0, 1.0);
    for v in t.data_mut() {
        *v = v.signum() * (0.05 + v.abs());
    }
    t
}

/// A shuffled ladder of distinct values 0.02 apart, so every pooling window
/// has a unique maximum far beyond `ε`.
fn distinct(seed: u64, k: u64, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let perm = rng::permutation(&mut rng::stream(seed, Stream::Synth, 2000 + k), n);
    Tensor::new(shape, perm.iter().map(|&p| p as f32 * 0.02 - n as f32 * 0.01).collect()).unwrap()
}

/// Central differences of `L = Σ r·f(inputs)` against reverse mode, with
/// `r` drawn from `seed`. Returns `|g − ĝ| / max(|g|, |ĝ|, 1)` for every
/// input element.
pub fn gradcheck(seed: u64, inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Result<Var>) -> Vec<f64> {
    let eval = |xs: &[Tensor]| -> (Vec<f32>, Vec<usize>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.input(t.clone(), true)).collect();
        let y = f(&mut tape, &vars).unwrap();
        (tape.value(y).to_vec(), tape.shape(y).to_vec())
    };
    let (y0, _) = eval(inputs);
    let mut rr = rng::stream(seed, Stream::Synth, 3000);
    let r: Vec<f32> = (0..y0.len()).map(|_| rr.gen::<f32>() * 2.0 - 1.0).collect();
    let loss = |y: &[f32]| -> f64 { y.iter().zip(&r).map(|(&a, &b)| a as f64 * b as f64).sum() };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone(), true)).collect();
    let y = f(&mut tape, &vars).unwrap();
    let l = tape.weighted_sum(y, r.clone()).unwrap();
    let grads = tape.backward(l).unwrap();

    let mut errs = Vec::new();
    for (k, t) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], t.numel());
        for i in 0..t.numel() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            let x = t.data()[i];
            plus[k].data_mut()[i] = x + FD_EPS;
            minus[k].data_mut()[i] = x - FD_EPS;
            let h = (plus[k].data()[i] - minus[k].data()[i]) as f64;
            let numeric = (loss(&eval(&plus).0) - loss(&eval(&minus).0)) / h;
            let a = analytic[i] as f64;
            errs.push((a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0));
        }
    }
    errs
}

type Case = (Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

/// Every differentiable tape operation with seeded operands.
pub fn op_cases(seed: u64) -> Vec<(&'static str, Case)> {
    let u = |k: u64, shape: &[usize]| uniform(seed, k, shape, -1.0, 1.0);
    let labels: Vec<f32> = {
        let mut r = rng::stream(seed, Stream::Synth, 4000);
        (0..2 * 9).map(|_| [-1.0f32, 0.0, 1.0][rng::below(&mut r, 3)]).collect()
    };
    let stats = RunningStats::new(3);
    let mut v: Vec<(&'static str, Case)> = vec![
        ("conv2d", (vec![u(0, &[2, 2, 5, 5]), u(1, &[3, 2, 3, 3]), u(2, &[3])], Box::new(|t, x| t.conv2d(x[0], x[1], Some(x[2]), 1, 1)))),
        ("conv2d_strided", (vec![u(0, &[1, 2, 6, 6]), u(1, &[2, 2, 2, 2])], Box::new(|t, x| t.conv2d(x[0], x[1], None, 2, 0)))),
        (
            "conv_transpose2d",
            (vec![u(0, &[2, 2, 3, 3]), u(1, &[2, 3, 2, 2]), u(2, &[3])], Box::new(|t, x| t.conv_transpose2d(x[0], x[1], Some(x[2]), 2, 0))),
        ),
        ("dense", (vec![u(0, &[2, 3, 4]), u(1, &[4, 5]), u(2, &[5])], Box::new(|t, x| t.dense(x[0], x[1], Some(x[2]))))),
        (
            "batch_norm",
            (
                vec![u(0, &[3, 3, 2, 2]), uniform(seed, 1, &[3], 0.5, 1.5), u(2, &[3])],
                Box::new(move |t, x| t.batch_norm(x[0], x[1], x[2], 1e-5, NormMode::Train, &mut stats.clone())),
            ),
        ),
        (
            "layer_norm",
            (vec![u(0, &[2, 3, 6]), uniform(seed, 1, &[6], 0.5, 1.5), u(2, &[6])], Box::new(|t, x| t.layer_norm(x[0], x[1], x[2], 1e-5))),
        ),
        ("relu", (vec![away_from_zero(seed, 0, &[2, 3, 4])], Box::new(|t, x| t.relu(x[0])))),
        ("gelu", (vec![uniform(seed, 0, &[2, 3, 4], -3.0, 3.0)], Box::new(|t, x| t.gelu(x[0])))),
        ("sigmoid", (vec![uniform(seed, 0, &[2, 6], -4.0, 4.0)], Box::new(|t, x| t.sigmoid(x[0])))),
        ("softmax", (vec![uniform(seed, 0, &[2, 3, 4], -2.0, 2.0)], Box::new(|t, x| t.softmax(x[0], 2)))),
        ("softmax_inner_axis", (vec![uniform(seed, 0, &[2, 3, 4], -2.0, 2.0)], Box::new(|t, x| t.softmax(x[0], 1)))),
        ("add", (vec![u(0, &[2, 5]), u(1, &[2, 5])], Box::new(|t, x| t.add(x[0], x[1])))),
        ("sub", (vec![u(0, &[2, 5]), u(1, &[2, 5])], Box::new(|t, x| t.sub(x[0], x[1])))),
        ("mul", (vec![u(0, &[2, 5]), u(1, &[2, 5])], Box::new(|t, x| t.mul(x[0], x[1])))),
        ("scale", (vec![u(0, &[7])], Box::new(|t, x| t.scale(x[0], -2.5)))),
        ("sum", (vec![u(0, &[3, 4])], Box::new(|t, x| t.sum(x[0])))),
        ("mean", (vec![u(0, &[3, 4])], Box::new(|t, x| t.mean(x[0])))),
        ("weighted_sum", (vec![u(0, &[6])], Box::new(|t, x| t.weighted_sum(x[0], vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.25])))),
        ("reshape", (vec![u(0, &[2, 6])], Box::new(|t, x| t.reshape(x[0], &[3, 4])))),
        ("maxpool2d", (vec![distinct(seed, 0, &[2, 2, 4, 4])], Box::new(|t, x| t.maxpool2d(x[0], 2)))),
        ("dropout", (vec![u(0, &[3, 8])], Box::new(move |t, x| t.dropout(x[0], 0.3, seed, true)))),
        ("concat", (vec![u(0, &[2, 1, 3]), u(1, &[2, 2, 3])], Box::new(|t, x| t.concat(&[x[0], x[1]], 1)))),
        ("nchw_to_tokens", (vec![u(0, &[2, 3, 2, 2])], Box::new(|t, x| t.nchw_to_tokens(x[0])))),
        ("tokens_to_nchw", (vec![u(0, &[2, 4, 3])], Box::new(|t, x| t.tokens_to_nchw(x[0])))),
        ("space_to_depth", (vec![u(0, &[1, 16, 2])], Box::new(|t, x| t.space_to_depth(x[0])))),
        ("depth_to_space", (vec![u(0, &[1, 4, 8])], Box::new(|t, x| t.depth_to_space(x[0])))),
        (
            "window_attention",
            (
                vec![u(0, &[1, 16, 12])],
                Box::new(|t, x| t.window_attention_core(x[0], AttentionLayout { heads: 2, window: 2, shift: 0 })),
            ),
        ),
        (
            "shifted_window_attention",
            (
                vec![u(0, &[1, 16, 12])],
                Box::new(|t, x| t.window_attention_core(x[0], AttentionLayout { heads: 2, window: 2, shift: 1 })),
            ),
        ),
    ];
    v.push((
        "masked_bce",
        (vec![uniform(seed, 0, &[2, 1, 3, 3], -3.0, 3.0)], Box::new(move |t, x| Ok(t.masked_bce(x[0], &labels, 2.0)?.0))),
    ));
    v
}

pub fn gradient_suite() -> Vec<GradStats> {
    let names: Vec<&'static str> = op_cases(0).into_iter().map(|(n, _)| n).collect();
    let mut per_op: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for seed in 0..SEEDS_PER_OP {
        for (k, (_, (inputs, f))) in op_cases(seed).into_iter().enumerate() {
            per_op[k].extend(gradcheck(seed, &inputs, f.as_ref()));
        }
    }
    names
        .into_iter()
        .zip(per_op)
        .map(|(op, mut e)| {
            e.sort_by(f64::total_cmp);
            GradStats { op, checked: e.len(), max_rel: *e.last().unwrap(), median_rel: e[e.len() / 2] }
        })
        .collect()
}

/// Fraction of (positive, negative) pairs ordered correctly, ties ½.
pub fn roc_all_pairs(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0f64, 0.0f64);
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Σ (R_t − R_{t−1})·P_t over every distinct score used as a `≥` threshold,
/// highest first.
pub fn ap_exhaustive(scores: &[f64], positive: &[bool]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, &p) in scores.iter().zip(positive) {
            if *s >= t {
                if p {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / n_pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// Exact Shapley values by averaging marginal contributions over all `n!`
/// player orderings.
pub fn shapley_by_permutations(n: usize, v: &dyn Fn(u32) -> f64) -> Vec<f64> {
    fn perms(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            perms(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let mut all = Vec::new();
    perms(&mut (0..n).collect(), 0, &mut all);
    let mut phi = vec![0.0; n];
    for order in &all {
        let mut s = 0u32;
        for &i in order {
            phi[i] += v(s | 1 << i) - v(s);
            s |= 1 << i;
        }
    }
    phi.iter().map(|p| p / all.len() as f64).collect()
}
