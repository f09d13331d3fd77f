//! Distribution distances used by the validation suites.

/// Total-variation distance `½ Σ |p − q|` between two pmfs on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (get(p, i) - get(q, i)).abs()).sum::<f64>()
}

/// Two-sample Kolmogorov–Smirnov statistic. Ties are handled by advancing
/// both samples past the common value before comparing.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.iter().copied().filter(|v| !v.is_nan()).collect();
    let mut b: Vec<f64> = b.iter().copied().filter(|v| !v.is_nan()).collect();
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS distance between an empirical sample and a weighted discrete
/// distribution given as `(value, probability)` atoms.
pub fn ks_sample_vs_atoms(sample: &[f64], atoms: &[(f64, f64)]) -> f64 {
    let mut s: Vec<f64> = sample.iter().copied().filter(|v| !v.is_nan()).collect();
    if s.is_empty() {
        return 1.0;
    }
    s.sort_by(f64::total_cmp);
    let mut atoms = atoms.to_vec();
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let n = s.len() as f64;
    let (mut i, mut j, mut cdf, mut d) = (0usize, 0usize, 0.0f64, 0.0f64);
    while i < s.len() || j < atoms.len() {
        let v = match (s.get(i), atoms.get(j)) {
            (Some(&x), Some(&(y, _))) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&(y, _))) => y,
            (None, None) => break,
        };
        // the step functions can differ just before v as well as at v
        d = d.max((i as f64 / n - cdf / total).abs());
        while i < s.len() && s[i] <= v {
            i += 1;
        }
        while j < atoms.len() && atoms[j].0 <= v {
            cdf += atoms[j].1;
            j += 1;
        }
        d = d.max((i as f64 / n - cdf / total).abs());
    }
    d
}

/// KS distance between a sample and a continuous CDF.
pub fn ks_sample_vs_cdf(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s: Vec<f64> = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}
