//! Linear over-parameterisation of fully-connected and convolutional layers.
//!
//! A layer `W` (m x n) becomes a chain `W_d ... W_1` with `W_1` h x n,
//! interior factors h x h and `W_d` m x h. A k x k convolution becomes a
//! k x k convolution to `h` channels followed by 1 x 1 convolutions.

use serde::{Deserialize, Serialize};

use crate::dynamics::FactoredLinear;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::rng_from_seed;
use crate::spectral::svd;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    /// Fresh scaled-normal factors (gain 1); ignores the layer's values.
    RandomScaled,
    /// Balanced SVD split whose product is the original layer.
    ExactBalanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionSpec {
    pub depth_factor: usize,
    pub width: usize,
    pub mode: ExpansionMode,
    #[serde(default)]
    pub allow_bottleneck: bool,
}

impl ExpansionSpec {
    pub fn new(depth_factor: usize, width: usize, mode: ExpansionMode) -> Result<Self> {
        if depth_factor == 0 || width == 0 {
            return Err(Error::InvalidParameter("depth factor and width must be positive".into()));
        }
        Ok(Self {
            depth_factor,
            width,
            mode,
            allow_bottleneck: false,
        })
    }

    pub fn allowing_bottleneck(self) -> Self {
        Self {
            allow_bottleneck: true,
            ..self
        }
    }

    fn check_width(&self, rows: usize, cols: usize) -> Result<()> {
        if self.depth_factor > 1 && self.width < rows.min(cols) && !self.allow_bottleneck {
            return Err(Error::Structural(format!(
                "width {} is below min({rows}, {cols}) and would cap the rank",
                self.width
            )));
        }
        Ok(())
    }
}

/// Factor shapes `(rows, cols)`, input side first.
fn chain_shapes(m: usize, n: usize, d: usize, h: usize) -> Vec<(usize, usize)> {
    (0..d)
        .map(|i| {
            let rows = if i + 1 == d { m } else { h };
            let cols = if i == 0 { n } else { h };
            (rows, cols)
        })
        .collect()
}

fn random_chain(m: usize, n: usize, spec: &ExpansionSpec, seed: u64) -> Vec<DenseMatrix> {
    let mut rng = rng_from_seed(seed);
    chain_shapes(m, n, spec.depth_factor, spec.width)
        .into_iter()
        .map(|(r, c)| DenseMatrix::random_normal(r, c, 1.0 / (c as f64).sqrt(), &mut rng))
        .collect()
}

/// Balanced split of `w` over a chain of width `h`. When `h` is below the
/// rank only the leading `h` singular directions survive.
fn balanced_chain(w: &DenseMatrix, d: usize, h: usize) -> Result<Vec<DenseMatrix>> {
    let s = svd(w)?;
    let (m, n) = w.shape();
    let keep = s.sigma().len().min(h);
    let root: Vec<f64> = s.sigma()[..keep].iter().map(|x| x.powf(1.0 / d as f64)).collect();
    Ok(chain_shapes(m, n, d, h)
        .into_iter()
        .enumerate()
        .map(|(i, (r, c))| {
            if i == 0 {
                DenseMatrix::from_fn(r, c, |a, b| if a < keep { root[a] * s.right[(b, a)] } else { 0.0 })
            } else if i + 1 == d {
                DenseMatrix::from_fn(r, c, |a, b| if b < keep { s.left[(a, b)] * root[b] } else { 0.0 })
            } else {
                DenseMatrix::from_fn(r, c, |a, b| if a == b && a < keep { root[a] } else { 0.0 })
            }
        })
        .collect())
}

pub fn expand_fc(w: &DenseMatrix, spec: &ExpansionSpec, seed: u64) -> Result<FactoredLinear> {
    let (m, n) = w.shape();
    spec.check_width(m, n)?;
    if spec.depth_factor == 1 {
        return FactoredLinear::new(vec![w.clone()]);
    }
    let factors = match spec.mode {
        ExpansionMode::RandomScaled => random_chain(m, n, spec, seed),
        ExpansionMode::ExactBalanced => balanced_chain(w, spec.depth_factor, spec.width)?,
    };
    FactoredLinear::with_bottleneck(factors)
}

/// Convolution kernel laid out `[out][in][row][col]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvWeight {
    out_ch: usize,
    in_ch: usize,
    k: usize,
    entries: Vec<f64>,
}

impl ConvWeight {
    pub fn new(out_ch: usize, in_ch: usize, k: usize, entries: Vec<f64>) -> Result<Self> {
        if out_ch == 0 || in_ch == 0 || k == 0 {
            return Err(Error::InvalidInput("kernel dimensions must be positive".into()));
        }
        if entries.len() != out_ch * in_ch * k * k {
            return Err(Error::InvalidInput(format!(
                "{} entries for a {out_ch}x{in_ch}x{k}x{k} kernel",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("kernel entries must be finite".into()));
        }
        Ok(Self {
            out_ch,
            in_ch,
            k,
            entries,
        })
    }

    pub fn random_normal<R: rand::Rng + ?Sized>(out_ch: usize, in_ch: usize, k: usize, std: f64, rng: &mut R) -> Self {
        let m = DenseMatrix::random_normal(out_ch, in_ch * k * k, std, rng);
        Self::from_matrix(&m, in_ch, k)
    }

    pub fn out_ch(&self) -> usize {
        self.out_ch
    }

    pub fn in_ch(&self) -> usize {
        self.in_ch
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.out_ch, self.in_ch, self.k, self.k)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn at(&self, o: usize, i: usize, r: usize, c: usize) -> f64 {
        self.entries[((o * self.in_ch + i) * self.k + r) * self.k + c]
    }

    /// `out x (in k k)` view.
    pub fn as_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_vec_unchecked(self.out_ch, self.in_ch * self.k * self.k, self.entries.clone())
    }

    fn from_matrix(m: &DenseMatrix, in_ch: usize, k: usize) -> Self {
        Self {
            out_ch: m.rows(),
            in_ch,
            k,
            entries: m.as_slice().to_vec(),
        }
    }
}

/// Channel-major feature map `[channel][row][col]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::InvalidInput(format!(
                "{} values for a {channels}x{height}x{width} map",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn at(&self, c: usize, r: usize, x: usize) -> f64 {
        self.data[(c * self.height + r) * self.width + x]
    }
}

/// Valid-padding, stride-1 cross-correlation.
pub fn conv2d(w: &ConvWeight, x: &FeatureMap) -> Result<FeatureMap> {
    if x.channels != w.in_ch {
        return Err(Error::Structural(format!(
            "kernel expects {} channels, input has {}",
            w.in_ch, x.channels
        )));
    }
    if x.height < w.k || x.width < w.k {
        return Err(Error::Structural(format!(
            "{}x{} input is smaller than the {}x{} kernel",
            x.height, x.width, w.k, w.k
        )));
    }
    let (oh, ow) = (x.height - w.k + 1, x.width - w.k + 1);
    let mut out = vec![0.0; w.out_ch * oh * ow];
    for o in 0..w.out_ch {
        for r in 0..oh {
            for c in 0..ow {
                let mut acc = 0.0;
                for i in 0..w.in_ch {
                    for dr in 0..w.k {
                        for dc in 0..w.k {
                            acc += w.at(o, i, dr, dc) * x.at(i, r + dr, c + dc);
                        }
                    }
                }
                out[(o * oh + r) * ow + c] = acc;
            }
        }
    }
    FeatureMap::new(w.out_ch, oh, ow, out)
}

/// Applies the chain in order.
pub fn conv_chain(chain: &[ConvWeight], x: &FeatureMap) -> Result<FeatureMap> {
    let mut h = x.clone();
    for w in chain {
        h = conv2d(w, &h)?;
    }
    Ok(h)
}

/// `[W_1: h x n x k x k, W_2..W_{d-1}: h x h x 1 x 1, W_d: m x h x 1 x 1]`.
pub fn expand_conv(w: &ConvWeight, spec: &ExpansionSpec, seed: u64) -> Result<Vec<ConvWeight>> {
    let flat = w.as_matrix();
    spec.check_width(flat.rows(), flat.cols())?;
    if spec.depth_factor == 1 {
        return Ok(vec![w.clone()]);
    }
    let factors = match spec.mode {
        ExpansionMode::RandomScaled => random_chain(flat.rows(), flat.cols(), spec, seed),
        ExpansionMode::ExactBalanced => balanced_chain(&flat, spec.depth_factor, spec.width)?,
    };
    Ok(factors
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if i == 0 {
                ConvWeight::from_matrix(f, w.in_ch, w.k)
            } else {
                ConvWeight::from_matrix(f, f.cols(), 1)
            }
        })
        .collect())
}

/// Single kernel equal to the chain: the 1 x 1 tail is a channel-space matrix
/// applied at every tap of the first kernel.
pub fn collapse_conv(chain: &[ConvWeight]) -> Result<ConvWeight> {
    let (first, rest) = chain
        .split_first()
        .ok_or_else(|| Error::InvalidInput("empty convolution chain".into()))?;
    let mut acc = first.as_matrix();
    let mut channels = first.out_ch;
    for (i, w) in rest.iter().enumerate() {
        if w.k != 1 {
            return Err(Error::UnsupportedComposition(format!(
                "factor {} is {}x{}; only 1x1 kernels may follow the first",
                i + 1,
                w.k,
                w.k
            )));
        }
        if w.in_ch != channels {
            return Err(Error::Structural(format!(
                "factor {} takes {} channels but receives {channels}",
                i + 1,
                w.in_ch
            )));
        }
        acc = &w.as_matrix() * &acc;
        channels = w.out_ch;
    }
    Ok(ConvWeight::from_matrix(&acc, first.in_ch, first.k))
}

/// Linear map acting on inputs stored one probe per column.
pub trait LinearMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix>;
}

impl LinearMap for DenseMatrix {
    fn input_dim(&self) -> usize {
        self.cols()
    }

    fn output_dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.matmul(x)
    }
}

impl LinearMap for FactoredLinear {
    fn input_dim(&self) -> usize {
        FactoredLinear::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        FactoredLinear::output_dim(self)
    }

    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut h = x.clone();
        for w in self.factors() {
            h = w.matmul(&h)?;
        }
        Ok(h)
    }
}

/// A convolution chain on inputs of a fixed spatial size, with feature maps
/// flattened channel-major.
#[derive(Clone, Debug)]
pub struct ConvMap {
    pub chain: Vec<ConvWeight>,
    pub height: usize,
    pub width: usize,
}

impl ConvMap {
    fn out_hw(&self) -> (usize, usize) {
        let shrink: usize = self.chain.iter().map(|w| w.k - 1).sum();
        (self.height.saturating_sub(shrink), self.width.saturating_sub(shrink))
    }
}

impl LinearMap for ConvMap {
    fn input_dim(&self) -> usize {
        self.chain.first().map_or(0, |w| w.in_ch) * self.height * self.width
    }

    fn output_dim(&self) -> usize {
        let (h, w) = self.out_hw();
        self.chain.last().map_or(0, |c| c.out_ch) * h * w
    }

    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let in_ch = self.chain.first().map_or(0, |w| w.in_ch);
        if x.rows() != self.input_dim() {
            return Err(Error::Structural(format!("probe has {} rows, map expects {}", x.rows(), self.input_dim())));
        }
        let mut cols = Vec::with_capacity(x.cols());
        for c in 0..x.cols() {
            let map = FeatureMap::new(in_ch, self.height, self.width, x.column(c))?;
            cols.push(conv_chain(&self.chain, &map)?.data);
        }
        let rows = cols.first().map_or(0, Vec::len);
        Ok(DenseMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r]))
    }
}

/// Largest elementwise output gap over `probes` standard Gaussian inputs.
pub fn verify_equivalence<A: LinearMap + ?Sized, B: LinearMap + ?Sized>(
    original: &A,
    expanded: &B,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if original.input_dim() != expanded.input_dim() || original.output_dim() != expanded.output_dim() {
        return Err(Error::Structural(format!(
            "maps differ in shape: {} -> {} vs {} -> {}",
            original.input_dim(),
            original.output_dim(),
            expanded.input_dim(),
            expanded.output_dim()
        )));
    }
    if probes == 0 {
        return Ok(0.0);
    }
    let x = DenseMatrix::random_normal(original.input_dim(), probes, 1.0, &mut rng_from_seed(seed));
    Ok((&original.apply(&x)? - &expanded.apply(&x)?).max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::end_to_end;
    use crate::spectral::{singular_values, threshold_rank};

    fn rel(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        (a - b).frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn balanced_identity() {
        let spec = ExpansionSpec::new(2, 4, ExpansionMode::ExactBalanced).unwrap();
        let f = expand_fc(&DenseMatrix::identity(4), &spec, 0).unwrap();
        for w in f.factors() {
            assert!((&w.t_mul(w) - &DenseMatrix::identity(4)).max_abs() < 1e-12);
        }
        assert!((&end_to_end(&f) - &DenseMatrix::identity(4)).max_abs() < 1e-12);
    }

    #[test]
    fn balanced_round_trip() {
        let mut rng = rng_from_seed(1);
        for (m, n, d, h) in [(8, 8, 3, 8), (5, 9, 4, 6), (9, 4, 2, 12), (6, 6, 5, 6)] {
            let w = DenseMatrix::random_normal(m, n, 1.0, &mut rng);
            let spec = ExpansionSpec::new(d, h, ExpansionMode::ExactBalanced).unwrap();
            let f = expand_fc(&w, &spec, 0).unwrap();
            assert_eq!(f.depth(), d);
            assert!(rel(&end_to_end(&f), &w) <= 1e-10, "{m}x{n} d={d} h={h}");
            assert!(verify_equivalence(&w, &f, 16, 3).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn depth_one_is_the_layer() {
        let w = DenseMatrix::random_normal(3, 5, 1.0, &mut rng_from_seed(2));
        for mode in [ExpansionMode::ExactBalanced, ExpansionMode::RandomScaled] {
            let f = expand_fc(&w, &ExpansionSpec::new(1, 1, mode).unwrap(), 4).unwrap();
            assert_eq!(f.factors(), std::slice::from_ref(&w));
            assert_eq!(verify_equivalence(&w, &f, 8, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn bottleneck_rule() {
        let w = DenseMatrix::random_normal(6, 6, 1.0, &mut rng_from_seed(3));
        let spec = ExpansionSpec::new(3, 2, ExpansionMode::ExactBalanced).unwrap();
        assert!(matches!(expand_fc(&w, &spec, 0), Err(Error::Structural(_))));
        for mode in [ExpansionMode::ExactBalanced, ExpansionMode::RandomScaled] {
            let spec = ExpansionSpec::new(3, 2, mode).unwrap().allowing_bottleneck();
            let f = expand_fc(&w, &spec, 5).unwrap();
            let r = threshold_rank(&singular_values(&end_to_end(&f)).unwrap(), 1e-8).unwrap();
            assert!(r <= 2);
        }
    }

    #[test]
    fn random_scaled_preserves_output_variance() {
        let w = DenseMatrix::zeros(64, 64);
        let spec = ExpansionSpec::new(4, 64, ExpansionMode::RandomScaled).unwrap();
        let f = expand_fc(&w, &spec, 7).unwrap();
        let mut rng = rng_from_seed(8);
        let reference = DenseMatrix::random_normal(64, 64, 1.0 / 8.0, &mut rng);
        let x = DenseMatrix::random_normal(64, 10_000, 1.0, &mut rng);
        let var = |m: &DenseMatrix| m.as_slice().iter().map(|v| v * v).sum::<f64>() / m.as_slice().len() as f64;
        let ratio = var(&f.apply(&x).unwrap()) / var(&reference.apply(&x).unwrap());
        assert!((0.5..2.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn conv_chain_layout() {
        let mut rng = rng_from_seed(4);
        let w = ConvWeight::random_normal(5, 3, 3, 1.0, &mut rng);
        let spec = ExpansionSpec::new(3, 27, ExpansionMode::RandomScaled).unwrap();
        let chain = expand_conv(&w, &spec, 1).unwrap();
        let shapes: Vec<_> = chain.iter().map(ConvWeight::shape).collect();
        assert_eq!(shapes, vec![(27, 3, 3, 3), (27, 27, 1, 1), (5, 27, 1, 1)]);
        assert_eq!(expand_conv(&w, &ExpansionSpec::new(1, 1, ExpansionMode::RandomScaled).unwrap(), 1).unwrap(), vec![w.clone()]);
        assert!(expand_conv(&w, &ExpansionSpec::new(2, 4, ExpansionMode::ExactBalanced).unwrap(), 1).is_err());
    }

    #[test]
    fn exact_conv_collapse_restores_kernel() {
        let mut rng = rng_from_seed(5);
        let w = ConvWeight::random_normal(4, 2, 3, 1.0, &mut rng);
        let spec = ExpansionSpec::new(3, 18, ExpansionMode::ExactBalanced).unwrap();
        let collapsed = collapse_conv(&expand_conv(&w, &spec, 0).unwrap()).unwrap();
        assert!(rel(&collapsed.as_matrix(), &w.as_matrix()) <= 1e-10);
    }

    #[test]
    fn collapse_matches_sequential_convolution() {
        let mut rng = rng_from_seed(6);
        let chain = vec![
            ConvWeight::random_normal(6, 3, 3, 0.5, &mut rng),
            ConvWeight::random_normal(6, 6, 1, 0.5, &mut rng),
            ConvWeight::random_normal(4, 6, 1, 0.5, &mut rng),
        ];
        let x = FeatureMap::new(3, 9, 9, DenseMatrix::random_normal(1, 243, 1.0, &mut rng).into_vec()).unwrap();
        let direct = conv_chain(&chain, &x).unwrap();
        let single = conv2d(&collapse_conv(&chain).unwrap(), &x).unwrap();
        assert_eq!((direct.channels, direct.height, direct.width), (4, 7, 7));
        let gap = direct.data.iter().zip(&single.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-8);

        let a = ConvMap { chain: chain.clone(), height: 9, width: 9 };
        let b = ConvMap { chain: vec![collapse_conv(&chain).unwrap()], height: 9, width: 9 };
        assert!(verify_equivalence(&a, &b, 4, 2).unwrap() <= 1e-8);
    }

    #[test]
    fn collapse_trivial_cases() {
        let mut rng = rng_from_seed(7);
        let first = ConvWeight::random_normal(3, 2, 3, 1.0, &mut rng);
        let id = ConvWeight::new(3, 3, 1, DenseMatrix::identity(3).into_vec()).unwrap();
        assert_eq!(collapse_conv(&[first.clone(), id.clone(), id]).unwrap(), first);

        let s = |v: f64| ConvWeight::new(1, 1, 1, vec![v]).unwrap();
        assert_eq!(collapse_conv(&[s(2.0), s(3.0), s(-0.5)]).unwrap(), s(-3.0));

        let bad = ConvWeight::random_normal(3, 3, 3, 1.0, &mut rng);
        assert!(matches!(collapse_conv(&[first, bad]), Err(Error::UnsupportedComposition(_))));
    }

    #[test]
    fn direct_convolution_oracle() {
        // 1 channel, 3x3 input, 2x2 kernel, worked by hand
        let w = ConvWeight::new(1, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = FeatureMap::new(1, 3, 3, (1..=9).map(f64::from).collect()).unwrap();
        let y = conv2d(&w, &x).unwrap();
        assert_eq!(y.data, vec![37.0, 47.0, 67.0, 77.0]);
    }
}
