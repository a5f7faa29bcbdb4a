//! Straightforward per-voxel re-implementations of every metric, used as test oracles.
//! Nothing here calls into the metric code of the library.
#![allow(dead_code)]

use mreval_core::volume::{LabelVolume, ProbabilityVolume};

pub const BG: u8 = 0;
pub const FG: u8 = 1;
pub const DIS: u8 = 2;

pub fn voxels(pred: &ProbabilityVolume) -> Vec<[f64; 4]> {
    (0..pred.geometry().voxel_count()).map(|i| pred.voxel(i)).collect()
}

/// Region code per voxel for one class.
pub fn regions(raters: &[LabelVolume], class: u8) -> Vec<u8> {
    let n = raters[0].voxels().len();
    (0..n)
        .map(|i| {
            let votes = raters.iter().filter(|r| r.voxels()[i] == class).count();
            if votes == raters.len() {
                FG
            } else if votes == 0 {
                BG
            } else {
                DIS
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub enum Rule {
    Threshold(f64),
    Argmax,
}

fn first_max(p: &[f64; 4]) -> usize {
    let mut best = 0;
    for c in 1..4 {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

pub fn predicted(p: &[f64; 4], class: u8, rule: Rule) -> bool {
    match rule {
        Rule::Threshold(t) => p[class as usize] >= t,
        Rule::Argmax => first_max(p) == class as usize,
    }
}

/// Dice over consensus regions; returns (dice, empty flag).
pub fn dsc(probs: &[[f64; 4]], region: &[u8], class: u8, rule: Rule) -> (f64, bool) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (p, &r) in probs.iter().zip(region) {
        let hit = predicted(p, class, rule);
        match (r, hit) {
            (FG, true) => tp += 1,
            (FG, false) => fn_ += 1,
            (BG, true) => fp += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        (1.0, true)
    } else {
        (2.0 * tp as f64 / (2 * tp + fp + fn_) as f64, false)
    }
}

pub fn c_seg(probs: &[[f64; 4]], region: &[u8], class: u8) -> Option<f64> {
    let (mut sf, mut nf, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for (p, &r) in probs.iter().zip(region) {
        if r == FG {
            sf += p[class as usize];
            nf += 1;
        } else if r == BG {
            sb += p[class as usize];
            nb += 1;
        }
    }
    if nf == 0 || nb == 0 {
        None
    } else {
        Some(((1.0 - sb / nb as f64) + sf / nf as f64) / 2.0)
    }
}

/// Bin holding `conf`: the `k` with `k/M <= conf < (k+1)/M`, the top bin closed at 1.
pub fn bin_of(conf: f64, bins: usize) -> usize {
    for k in 0..bins {
        let upper = (k + 1) as f64 / bins as f64;
        if conf < upper {
            return k;
        }
    }
    bins - 1
}

fn ece_from(samples: &[(f64, bool)], bins: usize, literal: bool) -> f64 {
    let mut total = 0.0;
    for k in 0..bins {
        let members: Vec<&(f64, bool)> = samples.iter().filter(|(c, _)| bin_of(*c, bins) == k).collect();
        if members.is_empty() {
            continue;
        }
        let conf = members.iter().map(|m| m.0).sum::<f64>() / members.len() as f64;
        let acc = members.iter().filter(|m| m.1).count() as f64 / members.len() as f64;
        let denom = if literal { bins } else { samples.len() } as f64;
        total += members.len() as f64 / denom * (acc - conf).abs();
    }
    total
}

/// Multiclass cECE against one rater.
pub fn cece(probs: &[[f64; 4]], labels: &[u8], bins: usize, literal: bool, include: Option<&[bool]>) -> f64 {
    let samples: Vec<(f64, bool)> = probs
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(i, _)| include.is_none_or(|m| m[*i]))
        .map(|(_, (p, &l))| {
            let w = first_max(p);
            (p[w], w == l as usize)
        })
        .collect();
    ece_from(&samples, bins, literal)
}

/// One-vs-rest cECE of one class against one rater.
pub fn cece_binary(probs: &[[f64; 4]], labels: &[u8], class: u8, bins: usize) -> f64 {
    let samples: Vec<(f64, bool)> = probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let q = p[class as usize];
            (q.max(1.0 - q), (q > 0.5) == (l == class))
        })
        .collect();
    ece_from(&samples, bins, false)
}

fn gauss_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf((x - mu) / (sigma * std::f64::consts::SQRT_2)))
}

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / h).ceil().max(1.0) as usize;
    let step = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for k in 1..n {
        s += f(a + k as f64 * step);
    }
    s * step
}

/// Integral of `(F(x) - 1{x >= y})^2` by the trapezoid rule, split at `y`.
/// The window spans `mu +- 10 sigma` and always contains `y`; outside it the
/// integrand is below `Phi(-10)^2` and is dropped.
pub fn crps(mu: f64, sigma: f64, y: f64, steps_per_sigma: f64) -> f64 {
    if sigma == 0.0 {
        return (y - mu).abs();
    }
    let a = (mu - 10.0 * sigma).min(y);
    let b = (mu + 10.0 * sigma).max(y);
    let h = sigma / steps_per_sigma;
    let left = trapezoid(|x| gauss_cdf(x, mu, sigma).powi(2), a, y, h);
    let right = trapezoid(|x| (1.0 - gauss_cdf(x, mu, sigma)).powi(2), y, b, h);
    left + right
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn population_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Textbook Pearson coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
        syy += (y[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks (1-based, ascending) by counting.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&o| o < v).count() as f64;
            let equal = x.iter().filter(|&&o| o == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}
