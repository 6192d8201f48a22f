use crate::error::{Error, Result};

/// Per-layer sparsity targets, held as exact retained-weight counts so that
/// prune/grow can hit them without rounding drift.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityDistribution {
    sizes: Vec<usize>,
    retained: Vec<usize>,
}

impl SparsityDistribution {
    pub fn from_counts(sizes: Vec<usize>, retained: Vec<usize>) -> Result<Self> {
        if sizes.len() != retained.len() {
            return Err(Error::config("sizes and retained counts differ in length"));
        }
        if let Some((n, k)) = sizes.iter().zip(&retained).find(|(n, k)| k > n) {
            return Err(Error::config(format!("layer keeps {k} of only {n} weights")));
        }
        Ok(Self { sizes, retained })
    }

    /// Every layer at density 1.
    pub fn dense(sizes: Vec<usize>) -> Self {
        let retained = sizes.clone();
        Self { sizes, retained }
    }

    /// Same sparsity `s` in every layer.
    pub fn uniform(sizes: Vec<usize>, sparsity: f64) -> Result<Self> {
        check_sparsity(sizes.len(), sparsity)?;
        let retained = sizes
            .iter()
            .map(|&n| floor_count((1.0 - sparsity) * n as f64).min(n))
            .collect();
        Ok(Self { sizes, retained })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len()
    }

    pub fn sparsities(&self) -> Vec<f64> {
        self.sizes
            .iter()
            .zip(&self.retained)
            .map(|(&n, &k)| if n == 0 { 0.0 } else { 1.0 - k as f64 / n as f64 })
            .collect()
    }

    pub fn densities(&self) -> Vec<f64> {
        self.sparsities().iter().map(|s| 1.0 - s).collect()
    }

    /// `Σ s^l n^l / Σ n^l`.
    pub fn global_sparsity(&self) -> f64 {
        let total: usize = self.sizes.iter().sum();
        if total == 0 {
            return 0.0;
        }
        1.0 - self.retained.iter().sum::<usize>() as f64 / total as f64
    }

    pub fn total_retained(&self) -> usize {
        self.retained.iter().sum()
    }

    /// Per-layer sparsity raised to `s + (1 − s)·α`: each layer gives up
    /// `⌊α·k⌋` of its `k` retained weights.
    pub fn inflated(&self, alpha: f64) -> Self {
        let alpha = alpha.clamp(0.0, 1.0);
        let retained = self
            .retained
            .iter()
            .map(|&k| k - floor_count(alpha * k as f64).min(k))
            .collect();
        Self {
            sizes: self.sizes.clone(),
            retained,
        }
    }
}

/// `⌊x⌋` tolerant of representation error just below an integer.
pub(crate) fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

fn check_sparsity(layers: usize, sparsity: f64) -> Result<()> {
    if layers == 0 {
        return Err(Error::config("no prunable layers"));
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::config(format!("sparsity {sparsity} outside [0, 1)")));
    }
    Ok(())
}

/// Erdős–Rényi-Kernel allocation.
///
/// Layer density is proportional to `Σ dims / Π dims` of its weight shape
/// (`(n_in + n_out + k_h + k_w)/(n_in·n_out·k_h·k_w)` for convolutions,
/// `(n_in + n_out)/(n_in·n_out)` for linear layers), scaled by a global
/// factor so the network keeps `⌊(1 − S)·n⌋` weights. Layers that would
/// exceed density 1 are made dense and the factor is re-solved over the
/// rest until no layer overflows.
pub fn erk_distribution(layer_shapes: &[Vec<usize>], sparsity: f64) -> Result<SparsityDistribution> {
    check_sparsity(layer_shapes.len(), sparsity)?;
    let sizes: Vec<usize> = layer_shapes.iter().map(|s| s.iter().product()).collect();
    if sizes.iter().any(|&n| n == 0) {
        return Err(Error::config("prunable layer with zero weights"));
    }
    let raw: Vec<f64> = layer_shapes
        .iter()
        .zip(&sizes)
        .map(|(s, &n)| s.iter().sum::<usize>() as f64 / n as f64)
        .collect();
    let total: usize = sizes.iter().sum();
    let target = floor_count((1.0 - sparsity) * total as f64);

    let mut dense = vec![false; sizes.len()];
    let eps = loop {
        let dense_weights: usize = sizes.iter().zip(&dense).filter(|(_, &d)| d).map(|(n, _)| n).sum();
        let divisor: f64 = raw
            .iter()
            .zip(&sizes)
            .zip(&dense)
            .filter(|(_, &d)| !d)
            .map(|((r, &n), _)| r * n as f64)
            .sum();
        if divisor == 0.0 {
            if dense_weights > target {
                return Err(Error::config(format!(
                    "sparsity {sparsity} cannot be met even with every layer dense"
                )));
            }
            break 0.0;
        }
        let eps = ((1.0 - sparsity) * total as f64 - dense_weights as f64) / divisor;
        let max_prob = raw
            .iter()
            .zip(&dense)
            .filter(|(_, &d)| !d)
            .map(|(r, _)| r * eps)
            .fold(0.0, f64::max);
        if max_prob <= 1.0 {
            break eps;
        }
        for (l, r) in raw.iter().enumerate() {
            if !dense[l] && r * eps >= max_prob {
                dense[l] = true;
            }
        }
    };

    let exact: Vec<f64> = (0..sizes.len())
        .map(|l| {
            if dense[l] {
                sizes[l] as f64
            } else {
                (raw[l] * eps).min(1.0) * sizes[l] as f64
            }
        })
        .collect();
    let mut retained: Vec<usize> = exact
        .iter()
        .zip(&sizes)
        .map(|(&x, &n)| floor_count(x).min(n))
        .collect();

    // Largest-remainder top-up so the total is exactly `target`.
    let mut short = target.saturating_sub(retained.iter().sum());
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - retained[a] as f64;
        let fb = exact[b] - retained[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &l in order.iter().cycle().take(order.len() * 2) {
        if short == 0 {
            break;
        }
        if retained[l] < sizes[l] {
            retained[l] += 1;
            short -= 1;
        }
    }
    Ok(SparsityDistribution { sizes, retained })
}
