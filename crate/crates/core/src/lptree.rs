//! Private tree for `sum_k |x_k - y|^p` with integer `p`.
//!
//! Every node stores the power sums `sum x^q` for `q = 0..=p` over its
//! interval. Splitting the points at `y` and expanding `|x - y|^p` binomially
//! turns the query into a combination of left and right power sums gathered
//! along one root-to-leaf path.
//!
//! Each power family `q` is released with budget `eps / (p + 1)`; its L1
//! sensitivity is `L * R^q`, so the Laplace scale is `(p + 1) * L * R^q / eps`.

use rayon::prelude::*;

use crate::error::{check_domain, Error, Result};
use crate::multidim::{check_query, dimension_seed, project_columns};
use crate::noise::{split_budget, LaplaceScale, NoiseStream, PrivacyBudget, RngSeed};
use crate::tree::{aggregate_up, ceil_log2, flat_index, layer_offset, path_siblings, TreeConfig};

/// Largest supported exponent.
pub const MAX_P: u32 = 16;

/// `max(1, ceil(log2(n) / p) + 1)`.
pub fn choose_lp_layers(n: usize, p: u32) -> Result<u32> {
    check_p(p)?;
    if n <= 1 {
        return Ok(1);
    }
    Ok(ceil_log2(n).div_ceil(p) + 1)
}

fn check_p(p: u32) -> Result<()> {
    if !(1..=MAX_P).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "exponent p must be in [1, {MAX_P}], got {p}"
        )));
    }
    Ok(())
}

/// `x^q` by repeated multiplication.
pub(crate) fn int_pow(x: f64, q: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..q {
        acc *= x;
    }
    acc
}

/// Binomial coefficients `C(p, 0..=p)`, exact for `p <= MAX_P`.
pub(crate) fn binomial_row(p: u32) -> Vec<f64> {
    let mut row = vec![1.0; p as usize + 1];
    for q in 1..=p as usize {
        row[q] = row[q - 1] * (p as usize + 1 - q) as f64 / q as f64;
    }
    row
}

/// Combines left/right power sums into `sum |x - y|^p`.
pub fn combine_power_sums(p: u32, y: f64, left: &[f64], right: &[f64]) -> f64 {
    let binom = binomial_row(p);
    let mut total = 0.0;
    for q in 0..=p {
        let qi = q as usize;
        let right_sign = if (p - q).is_multiple_of(2) { 1.0 } else { -1.0 };
        let left_sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        total += binom[qi] * int_pow(y, p - q) * (right_sign * right[qi] + left_sign * left[qi]);
    }
    total
}

/// Left/right power sums `(sum_{x<y} x^q, sum_{x>y} x^q)` by direct membership.
pub fn power_sums_from_sets(points: &[f64], y: f64, p: u32) -> (Vec<f64>, Vec<f64>) {
    let mut left = vec![0.0; p as usize + 1];
    let mut right = vec![0.0; p as usize + 1];
    for &x in points {
        let side = if x > y {
            &mut right
        } else if x < y {
            &mut left
        } else {
            continue;
        };
        for (q, s) in side.iter_mut().enumerate() {
            *s += int_pow(x, q as u32);
        }
    }
    (left, right)
}

/// Balanced tree of (noisy) power sums.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLpTree {
    config: TreeConfig,
    p: u32,
    noisy: bool,
    // node-major, q-inner: entry (node, q) at node * (p + 1) + q
    sums: Vec<f64>,
}

impl NoisyLpTree {
    /// Noise scale of power family `q`.
    pub fn noise_scale(config: &TreeConfig, p: u32, q: u32) -> Result<LaplaceScale> {
        check_p(p)?;
        let part = split_budget(config.budget(), p as usize + 1)[0];
        LaplaceScale::calibrated(
            f64::from(config.layers()) * int_pow(config.bound(), q),
            part,
        )
    }

    pub fn build(
        data: &[f64],
        config: TreeConfig,
        p: u32,
        noise: Option<&mut NoiseStream>,
    ) -> Result<Self> {
        check_p(p)?;
        let width = p as usize + 1;
        let mut sums = vec![0.0; config.node_count() * width];
        let leaf_base = layer_offset(config.layers());
        for &x in data {
            let base = (leaf_base + config.leaf_index(x)?) * width;
            let mut power = 1.0;
            for s in &mut sums[base..base + width] {
                *s += power;
                power *= x;
            }
        }
        aggregate_up(&mut sums, config.layers(), width);

        let noisy = noise.is_some();
        if let Some(stream) = noise {
            let scales = (0..=p)
                .map(|q| Self::noise_scale(&config, p, q))
                .collect::<Result<Vec<_>>>()?;
            for node in sums.chunks_exact_mut(width) {
                for (s, &scale) in node.iter_mut().zip(&scales) {
                    *s += stream.laplace(scale);
                }
            }
        }
        Ok(Self {
            config,
            p,
            noisy,
            sums,
        })
    }

    pub fn from_parts(config: TreeConfig, p: u32, noisy: bool, sums: Vec<f64>) -> Result<Self> {
        check_p(p)?;
        let expected = config.node_count() * (p as usize + 1);
        if sums.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} power sums, got {}",
                sums.len()
            )));
        }
        Ok(Self {
            config,
            p,
            noisy,
            sums,
        })
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }

    /// All power sums, layer-major with `q` innermost.
    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// Power sums `q = 0..=p` of node `j` on `layer`.
    pub fn node(&self, layer: u32, j: usize) -> &[f64] {
        let width = self.p as usize + 1;
        let base = flat_index(layer, j) * width;
        &self.sums[base..base + width]
    }

    pub fn noise_families(&self) -> Vec<PrivacyBudget> {
        split_budget(self.config.budget(), self.p as usize + 1)
    }

    /// Left and right power sums gathered along `y`'s path.
    pub fn accumulate(&self, y: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let leaf = self.config.leaf_index(y)?;
        let width = self.p as usize + 1;
        let mut left = vec![0.0; width];
        let mut right = vec![0.0; width];
        for (idx, is_left) in path_siblings(self.config.layers(), leaf) {
            let side = if is_left { &mut left } else { &mut right };
            let node = &self.sums[idx * width..(idx + 1) * width];
            for (acc, v) in side.iter_mut().zip(node) {
                *acc += v;
            }
        }
        Ok((left, right))
    }

    /// Private estimate of `sum_k |x_k - y|^p`.
    pub fn query(&self, y: f64) -> Result<f64> {
        check_domain(y, self.config.bound())?;
        let (left, right) = self.accumulate(y)?;
        Ok(combine_power_sums(self.p, y, &left, &right))
    }
}

/// One [`NoisyLpTree`] per coordinate, each at budget `eps / d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighDimLpTree {
    total_budget: PrivacyBudget,
    trees: Vec<NoisyLpTree>,
}

impl HighDimLpTree {
    /// Builds with [`choose_lp_layers`] unless `layers` is given.
    pub fn build<P: AsRef<[f64]> + Sync>(
        points: &[P],
        dim: usize,
        bound: f64,
        p: u32,
        layers: Option<u32>,
        budget: PrivacyBudget,
        noise: Option<RngSeed>,
    ) -> Result<Self> {
        let columns = project_columns(points, dim, bound)?;
        let part = split_budget(budget, dim)[0];
        let layers = match layers {
            Some(l) => l,
            None => choose_lp_layers(points.len(), p)?,
        };
        let config = TreeConfig::with_layers(points.len(), bound, layers, part)?;
        let trees = columns
            .par_iter()
            .enumerate()
            .map(|(i, col)| {
                let mut stream = noise.map(|s| dimension_seed(s, i).stream());
                NoisyLpTree::build(col, config, p, stream.as_mut())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            total_budget: budget,
            trees,
        })
    }

    pub fn from_trees(total_budget: PrivacyBudget, trees: Vec<NoisyLpTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Format("a structure needs at least one tree".into()));
        }
        Ok(Self {
            total_budget,
            trees,
        })
    }

    pub fn dim(&self) -> usize {
        self.trees.len()
    }

    pub fn p(&self) -> u32 {
        self.trees[0].p()
    }

    pub fn trees(&self) -> &[NoisyLpTree] {
        &self.trees
    }

    pub fn config(&self) -> &TreeConfig {
        self.trees[0].config()
    }

    pub fn total_budget(&self) -> PrivacyBudget {
        self.total_budget
    }

    pub fn noise_families(&self) -> Vec<PrivacyBudget> {
        self.trees
            .iter()
            .flat_map(NoisyLpTree::noise_families)
            .collect()
    }

    /// Private estimate of `sum_x ||x - y||_p^p`.
    pub fn query(&self, y: &[f64]) -> Result<f64> {
        check_query(y, self.dim())?;
        let mut total = 0.0;
        for (tree, &yi) in self.trees.iter().zip(y) {
            total += tree.query(yi)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l1tree::NoisyL1Tree;
    use crate::noise::compose_budgets;
    use crate::oracle::{exact_lpp, exact_lpp_1d, exact_lpp_restricted};
    use crate::tree::choose_layers;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn config(n: usize, bound: f64, layers: u32) -> TreeConfig {
        TreeConfig::with_layers(n, bound, layers, PrivacyBudget::pure(1.0).unwrap()).unwrap()
    }

    #[test]
    fn layer_choice() {
        assert_eq!(choose_lp_layers(256, 2).unwrap(), 5);
        assert_eq!(choose_lp_layers(1, 3).unwrap(), 1);
        for n in 1..3000 {
            assert_eq!(choose_lp_layers(n, 1).unwrap(), choose_layers(n));
        }
        // Matches the real-valued formula.
        for n in 2..3000usize {
            for p in 1..6u32 {
                let expect = ((n as f64).log2() / f64::from(p)).ceil() as u32 + 1;
                assert_eq!(choose_lp_layers(n, p).unwrap(), expect, "n={n} p={p}");
            }
        }
        assert!(choose_lp_layers(10, 0).is_err());
        assert!(choose_lp_layers(10, MAX_P + 1).is_err());
    }

    #[test]
    fn single_point_powers() {
        let t = NoisyLpTree::build(&[2.0], config(1, 4.0, 2), 2, None).unwrap();
        assert_eq!(t.node(2, 1), &[1.0, 2.0, 4.0]);
        assert_eq!(t.node(2, 0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn root_power_sums() {
        let t = NoisyLpTree::build(&[1.0, 3.0], config(2, 4.0, 3), 2, None).unwrap();
        assert_eq!(t.node(1, 0), &[2.0, 4.0, 10.0]);
    }

    #[test]
    fn p1_matches_l1_tree() {
        let data = [0.1, 0.35, 0.36, 0.8, 0.99];
        let cfg = config(5, 1.0, 4);
        let lp = NoisyLpTree::build(&data, cfg, 1, None).unwrap();
        let l1 = NoisyL1Tree::build(&data, cfg, None).unwrap();
        for (i, node) in lp.sums().chunks(2).enumerate() {
            assert_eq!(node[0], l1.counts()[i]);
            assert_eq!(node[1], l1.sums()[i]);
        }
        for y in [0.0, 0.2, 0.5, 0.77] {
            assert!((lp.query(y).unwrap() - l1.query(y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_points_square_distance() {
        let t = NoisyLpTree::build(&[1.0, 3.0], config(2, 4.0, 6), 2, None).unwrap();
        assert!((t.query(2.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..=64);
            let data: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let y: f64 = rng.random();
            let cfg = TreeConfig::new(n, 1.0, PrivacyBudget::pure(1.0).unwrap()).unwrap();
            let cfg = TreeConfig::with_layers(n, 1.0, cfg.layers().max(4), cfg.budget()).unwrap();
            let t = NoisyLpTree::build(&data, cfg, 3, None).unwrap();
            let leaf = cfg.leaf_interval(y).unwrap();
            let expected = exact_lpp_restricted(&data, y, 3, leaf);
            let got = t.query(y).unwrap();
            assert!(
                (got - expected).abs() <= 1e-6 * expected.max(1e-3),
                "{got} vs {expected}"
            );
        }
    }

    #[test]
    fn noise_scales_and_budget() {
        let cfg = config(4, 2.0, 3);
        let s = NoisyLpTree::noise_scale(&cfg, 2, 2).unwrap();
        assert!((s.lambda() - 3.0 * 3.0 * 4.0).abs() < 1e-12);
        let t = NoisyLpTree::build(&[0.5], cfg, 2, None).unwrap();
        let total = compose_budgets(&t.noise_families()).unwrap();
        assert!((total.epsilon() - 1.0).abs() < 1e-12);
        assert_eq!(t.noise_families().len(), 3);
    }

    #[test]
    fn rejects_bad_exponent_and_domain() {
        assert!(NoisyLpTree::build(&[0.5], config(1, 1.0, 2), 0, None).is_err());
        assert!(NoisyLpTree::build(&[1.5], config(1, 1.0, 2), 2, None).is_err());
        let t = NoisyLpTree::build(&[0.5], config(1, 1.0, 2), 2, None).unwrap();
        assert!(t.query(1.0).is_err());
    }

    #[test]
    fn high_dim_wrapper_sums_coordinates() {
        let pts = vec![vec![0.1, 0.9], vec![0.6, 0.2], vec![0.33, 0.5]];
        let t = HighDimLpTree::build(
            &pts,
            2,
            1.0,
            2,
            Some(8),
            PrivacyBudget::pure(2.0).unwrap(),
            None,
        )
        .unwrap();
        let y = [0.45, 0.7];
        let exact = exact_lpp(pts.iter().map(Vec::as_slice), &y, 2).unwrap();
        assert!((t.query(&y).unwrap() - exact).abs() < 1e-9);
        assert_eq!(t.config().budget().epsilon(), 1.0);
        let total = compose_budgets(&t.noise_families()).unwrap();
        assert!((total.epsilon() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn binomial_identity_on_sets(
            xs in prop::collection::vec(0.0f64..2.0, 0..64),
            y in 0.0f64..2.0,
            p in 1u32..=5,
        ) {
            let (left, right) = power_sums_from_sets(&xs, y, p);
            let direct = exact_lpp_1d(&xs, y, p);
            let got = combine_power_sums(p, y, &left, &right);
            prop_assert!((got - direct).abs() <= 1e-9 * direct.max(1.0));
        }

        #[test]
        fn noiseless_query_matches_restricted(
            xs in prop::collection::vec(0.0f64..1.0, 0..128),
            y in 0.0f64..1.0,
            p in 1u32..=3,
        ) {
            let layers = choose_lp_layers(xs.len(), p).unwrap();
            let cfg = config(xs.len(), 1.0, layers);
            let t = NoisyLpTree::build(&xs, cfg, p, None).unwrap();
            let leaf = cfg.leaf_interval(y).unwrap();
            let expected = exact_lpp_restricted(&xs, y, p, leaf.clone());
            let got = t.query(y).unwrap();
            prop_assert!((got - expected).abs() <= 1e-6 * expected.max(1.0));
            let in_leaf = xs.iter().filter(|x| leaf.contains(x)).count() as f64;
            let omitted = exact_lpp_1d(&xs, y, p) - expected;
            prop_assert!(omitted <= in_leaf * int_pow(cfg.leaf_width(), p) + 1e-12);
        }
    }
}
