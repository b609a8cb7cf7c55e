//! Shuffle-model summation: each user splits a fixed-point value plus a
//! share of distributed discrete Laplace noise into additive shares over
//! `Z_q`, a shuffler permutes all messages, and the analyzer sums them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::central::{check_beta, clip_l2, clip_rank_for_offset, median_rank, rotation_offset, shift_rows, MeanEstimate};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, NodeNoise, NoisyHierarchy};
use crate::privacy::{PrivacyBudget, PrivacyLedger, Share};
use crate::quantile::{priv_quantile, RangeCountOracle};
use crate::rng::{names, RandomSource, Stream};
use crate::transform::{inverse_rotate, rotate_dataset, rotate_real, RotationContext};
use num_rational::Ratio;

/// Parameters of the one-dimensional summation protocol for `n` users with
/// inputs in `[-C, C]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuffleParams {
    pub n: usize,
    pub c: f64,
    /// Modulus of the message group, a power of two.
    pub q: u64,
    /// Fixed-point scale: `x` is encoded as `round(s·(x + C))`.
    pub scale: f64,
    /// Largest encoded value, `⌈2Cs⌉`.
    pub sensitivity: u64,
    pub shares_per_user: usize,
    /// Parameter of the total noise, `P(k) ∝ p^|k|`.
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// Default parameters: `s = n/C`, `m = ⌈log₂ n⌉ + 1` shares,
/// `p = exp(-ε/Δ)` and `q` the next power of two above `4nΔ` that also
/// leaves ten noise standard deviations of headroom on both sides.
pub fn shuffle_params(n: usize, c: f64, epsilon: f64, delta: f64) -> Result<ShuffleParams> {
    if n == 0 {
        return Err(Error::InvalidArgument("no users".into()));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("bound must be positive, got {c}")));
    }
    PrivacyBudget::approx_dp(epsilon, delta)?;
    let scale = n as f64 / c;
    let sensitivity = (2.0 * c * scale).ceil() as u64;
    let p = (-epsilon / sensitivity as f64).exp();
    let shares_per_user = (usize::BITS - (n - 1).leading_zeros()) as usize + 1;
    let mut params = ShuffleParams { n, c, q: 0, scale, sensitivity, shares_per_user: shares_per_user.max(2), p, epsilon, delta };
    let top = (n as u64).checked_mul(sensitivity).ok_or(Error::Overflow("shuffle aggregate"))?;
    let need = top.checked_mul(4).and_then(|v| v.max(top + 2 * params.headroom() + 1).checked_next_power_of_two());
    params.q = need.ok_or(Error::Overflow("shuffle modulus"))?;
    assert!(params.q > top + 2 * params.headroom());
    Ok(params)
}

impl ShuffleParams {
    /// Variance of the total noise, `2p/(1-p)²`.
    pub fn noise_variance(&self) -> f64 {
        2.0 * self.p / (1.0 - self.p).powi(2)
    }

    /// Ten noise standard deviations, rounded up.
    pub fn headroom(&self) -> u64 {
        (10.0 * self.noise_variance().sqrt()).ceil() as u64
    }

    /// `c` with `MSE ≤ c·(C/(εn))²`: noise variance plus worst-case
    /// rounding, both in units of the mean.
    pub fn mse_constant(&self) -> f64 {
        let sn = self.scale * self.n as f64;
        let mse = self.noise_variance() / (sn * sn) + 1.0 / (4.0 * self.scale * self.scale);
        mse / (self.c / (self.epsilon * self.n as f64)).powi(2)
    }

    fn mask(&self) -> u64 {
        self.q - 1
    }
}

/// Pólya(`r`, `p`) draw via its Gamma–Poisson mixture.
fn polya(r: f64, p: f64, rng: &mut Stream) -> i64 {
    if !rng.noise_enabled() || p == 0.0 {
        return 0;
    }
    let lambda = Gamma::new(r, p / (1.0 - p)).expect("valid Gamma parameters").sample(rng);
    if lambda > 0.0 {
        Poisson::new(lambda).expect("valid Poisson rate").sample(rng) as i64
    } else {
        0
    }
}

/// This user's share of the noise: a difference of two `Pólya(1/n, p)`
/// draws, so that `n` shares add up to a discrete Laplace variable.
pub fn noise_share(params: &ShuffleParams, rng: &mut Stream) -> i64 {
    let r = 1.0 / params.n as f64;
    polya(r, params.p, rng) - polya(r, params.p, rng)
}

/// Splits `round(s·(x + C)) + η` into `m` uniform shares summing to it mod `q`.
pub fn shuffle_encode_1d(x: f64, params: &ShuffleParams, rng: &mut Stream) -> Result<Vec<u64>> {
    if !(x.abs() <= params.c) {
        return Err(Error::OutOfRange { value: x.to_string(), range: format!("[-{0}, {0}]", params.c) });
    }
    let z = ((params.scale * (x + params.c)).round() as i64).min(params.sensitivity as i64) + noise_share(params, rng);
    let mask = params.mask();
    let mut shares: Vec<u64> = (1..params.shares_per_user).map(|_| rng.random::<u64>() & mask).collect();
    let partial = shares.iter().fold(0u64, |a, &s| a.wrapping_add(s));
    shares.push((z as u64).wrapping_sub(partial) & mask);
    Ok(shares)
}

/// All messages of one dimension after the shuffler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleTranscript {
    pub messages: Vec<u64>,
}

/// Uniformly permutes the pooled messages.
pub fn shuffle_messages(mut messages: Vec<u64>, rng: &mut Stream) -> ShuffleTranscript {
    messages.shuffle(rng);
    ShuffleTranscript { messages }
}

/// Sums the transcript mod `q`, lifts it into `[-H, nΔ + H]` and rescales
/// to a mean estimate.
pub fn shuffle_decode_1d(transcript: &ShuffleTranscript, n: usize, params: &ShuffleParams) -> Result<f64> {
    let want = n * params.shares_per_user;
    if transcript.messages.len() != want {
        return Err(Error::DimensionMismatch { expected: want, got: transcript.messages.len() });
    }
    let total = transcript.messages.iter().fold(0u64, |a, &m| a.wrapping_add(m)) & params.mask();
    let top = n as u64 * params.sensitivity + params.headroom();
    let lifted = if total <= top {
        total as f64
    } else if total >= params.q - params.headroom() {
        -((params.q - total) as f64)
    } else {
        return Err(Error::Wraparound { modulus: params.q, decoded: total });
    };
    Ok(lifted / (params.scale * n as f64) - params.c)
}

/// Runs the whole one-dimensional protocol: every user encodes with its own
/// substream, the shuffler permutes, the analyzer decodes.
pub fn shuffle_sum_1d(xs: &[f64], params: &ShuffleParams, source: &RandomSource) -> Result<f64> {
    let mut messages = Vec::with_capacity(xs.len() * params.shares_per_user);
    for (i, &x) in xs.iter().enumerate() {
        messages.extend(shuffle_encode_1d(x, params, &mut source.derive(names::USER, i as u64).stream("shares"))?);
    }
    let transcript = shuffle_messages(messages, &mut source.stream(names::SHUFFLER));
    shuffle_decode_1d(&transcript, xs.len(), params)
}

/// Per-coordinate bound after the summation rotation,
/// `C' = C·sqrt(2·ln(4·n·d_pad/β'))`.
pub fn coordinate_bound(c: f64, n: usize, d_pad: usize, beta_stage: f64) -> f64 {
    c * (2.0 * (4.0 * n as f64 * d_pad as f64 / beta_stage).ln()).sqrt()
}

/// Per-dimension privacy parameters for a `d_pad`-dimensional summation
/// under `(ε, δ)`: the better of advanced and basic composition for ε,
/// and `δ/d_pad`.
pub fn per_dimension_budget(epsilon: f64, delta: f64, d_pad: usize) -> (f64, f64) {
    let k = d_pad as f64;
    let advanced = epsilon / (2.0 * (k * (k / delta).ln()).sqrt());
    (advanced.max(epsilon / k), delta / k)
}

/// Result of a `d`-dimensional shuffle summation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleSum {
    pub value: Vec<f64>,
    pub coordinate_bound: f64,
    /// Rotated coordinates that exceeded the coordinate bound and were clipped.
    pub clipped_coordinates: usize,
}

fn shuffle_sum_d(xs: &[Vec<f64>], c: f64, epsilon: f64, delta: f64, beta_stage: f64, source: &RandomSource) -> Result<ShuffleSum> {
    let n = xs.len();
    let d = xs.first().map(|x| x.len()).ok_or_else(|| Error::InvalidArgument("no users".into()))?;
    if let Some(x) = xs.iter().find(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt() > c + 1e-9 * c.max(1.0)) {
        return Err(Error::InvalidArgument(format!("input of norm {} exceeds bound {c}", x.iter().map(|v| v * v).sum::<f64>().sqrt())));
    }
    let ctx = RotationContext::new(d, &mut source.stream("sum-rotation"))?;
    let d_pad = ctx.d_pad();
    if c == 0.0 {
        return Ok(ShuffleSum { value: vec![0.0; d], coordinate_bound: 0.0, clipped_coordinates: 0 });
    }
    let bound = coordinate_bound(c, n, d_pad, beta_stage);
    let (eps_dim, delta_dim) = per_dimension_budget(epsilon, delta, d_pad);
    let params = shuffle_params(n, bound, eps_dim, delta_dim)?;

    let mut clipped = 0;
    let mut columns = vec![Vec::with_capacity(n); d_pad];
    for x in xs {
        for (col, v) in columns.iter_mut().zip(rotate_real(&ctx, x)?) {
            if v.abs() > bound {
                clipped += 1;
            }
            col.push(v.clamp(-bound, bound));
        }
    }
    let mut rotated_mean = Vec::with_capacity(d_pad);
    for (j, col) in columns.iter().enumerate() {
        rotated_mean.push(shuffle_sum_1d(col, &params, &source.derive("dimension", j as u64))?);
    }
    Ok(ShuffleSum { value: inverse_rotate(&ctx, &rotated_mean)?, coordinate_bound: bound, clipped_coordinates: clipped })
}

/// `(ε, δ)` shuffle-model mean of vectors with `‖x_i‖₂ ≤ C`: rotate, clip
/// each coordinate, run the one-dimensional protocol per coordinate, rotate
/// back.
pub fn shuffle_mean_d(xs: &[Vec<f64>], c: f64, epsilon: f64, delta: f64, beta: f64, source: &RandomSource) -> Result<(MeanEstimate, ShuffleSum)> {
    check_beta(beta)?;
    let mut ledger = PrivacyLedger::new(PrivacyBudget::approx_dp(epsilon, delta)?);
    ledger.charge("shuffle summation", Share::whole())?;
    let sum = shuffle_sum_d(xs, c, epsilon, delta, beta / 3.0, source)?;
    ledger.finalize()?;
    let est = MeanEstimate { value: sum.value.clone(), clip_threshold: c, clip_rank: xs.len(), ledger, fallback_zero: false, shift: None };
    Ok((est, sum))
}

/// Node noise of a histogram hierarchy released under `ε` by the summation
/// protocol: budget `ε/L` per level at ℓ1 sensitivity 2.
pub fn hierarchy_node_noise(u: u128, epsilon: f64) -> Result<NodeNoise> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidBudget(format!("epsilon must be positive, got {epsilon}")));
    }
    let l = Hierarchy::new(u)?.levels() as f64;
    Ok(NodeNoise::DiscreteLaplace { p: (-epsilon / (2.0 * l)).exp() })
}

/// Aggregate of a histogram hierarchy summed through the protocol: exact
/// node counts plus one discrete Laplace draw per node, the law of the
/// summed Pólya shares.
pub fn simulate_shuffle_range_structure(values: Vec<u128>, u: u128, epsilon: f64, source: RandomSource) -> Result<NoisyHierarchy> {
    NoisyHierarchy::lazy(values, u, hierarchy_node_noise(u, epsilon)?, source)
}

/// Rank offset that balances clipping bias against summation noise:
/// `n` times the per-unit-radius ℓ2 noise of the summation.
pub fn shuffle_clip_offset(n: usize, d_pad: usize, epsilon: f64, delta: f64, beta_stage: f64) -> Result<f64> {
    let (eps_dim, delta_dim) = per_dimension_budget(epsilon, delta, d_pad);
    let params = shuffle_params(n, 1.0, eps_dim, delta_dim)?;
    let per_coordinate = params.noise_variance().sqrt() / (params.scale * n as f64);
    Ok(n as f64 * per_coordinate * coordinate_bound(1.0, n, d_pad, beta_stage))
}

fn round_share(primary: Ratio<u64>) -> Share {
    Share::new(primary, Ratio::new(1, 3))
}

/// Three-round `(ε, δ)` shuffle-model mean: medians of rotated coordinates
/// (ε/4), a clipping radius from shifted norms (3ε/16), and the summation
/// protocol on clipped shifted vectors (9ε/16); δ is split evenly.
pub fn shuffle_pipeline(data: &Dataset, epsilon: f64, delta: f64, beta: f64, source: &RandomSource) -> Result<MeanEstimate> {
    check_beta(beta)?;
    if data.is_signed() {
        return Err(Error::InvalidArgument("the shuffle pipeline expects data in [0, u]".into()));
    }
    let mut ledger = PrivacyLedger::new(PrivacyBudget::approx_dp(epsilon, delta)?);
    let n = data.n();
    let ctx = RotationContext::new(data.d(), &mut source.stream(names::ROTATION_SIGNS))?;
    let d_pad = ctx.d_pad();
    let rotated = rotate_dataset(&ctx, data)?;
    let offset = rotation_offset(&ctx, data)?;

    let per_dim = round_share(Ratio::new(1, 4)).split(d_pad as u64);
    let (eps_dim, _) = ledger.epsilon_delta_of(per_dim)?;
    let mut center = Vec::with_capacity(d_pad);
    for j in 0..d_pad {
        ledger.charge(format!("round 1: median[{j}]"), per_dim)?;
        let column = rotated.rows().map(|r| (r[j] + offset as i64) as u128).collect();
        let mut s = simulate_shuffle_range_structure(column, 2 * offset as u128, eps_dim, source.derive("round-1", j as u64))?;
        center.push(priv_quantile(&mut s, median_rank(n), beta / 3.0)?.value as i64 - offset as i64);
    }
    let shifted = shift_rows(&rotated, &center, offset)?;
    let center_f: Vec<f64> = center.iter().map(|&c| c as f64).collect();

    let (eps2, _) = ledger.epsilon_delta_of(round_share(Ratio::new(3, 16)))?;
    let (eps3, delta3) = ledger.epsilon_delta_of(round_share(Ratio::new(9, 16)))?;
    let mut norms = simulate_shuffle_range_structure(shifted.squared_norms(), shifted.squared_norm_universe(), eps2, source.derive("round-2", 0))?;
    let tau = norms.rank_error(beta / 3.0);
    let k = if source.noise_enabled() { shuffle_clip_offset(n, d_pad, eps3, delta3, beta / 3.0)?.max(tau) } else { 0.0 };

    if n as f64 <= k {
        ledger.charge("rounds 2-3: small-n fallback", Share::new(Ratio::new(3, 4), Ratio::new(2, 3)))?;
        ledger.finalize()?;
        return Ok(MeanEstimate {
            value: inverse_rotate(&ctx, &center_f)?,
            clip_threshold: 0.0,
            clip_rank: 0,
            ledger,
            fallback_zero: true,
            shift: Some(center_f),
        });
    }

    let m = clip_rank_for_offset(n, k);
    ledger.charge("round 2: clip threshold", round_share(Ratio::new(3, 16)))?;
    let c = (priv_quantile(&mut norms, m, beta / 3.0)?.value as f64).sqrt();

    ledger.charge("round 3: shuffle summation", round_share(Ratio::new(9, 16)))?;
    let xs: Vec<Vec<f64>> = shifted.rows().map(|r| clip_l2(&r.iter().map(|&v| v as f64).collect::<Vec<_>>(), c)).collect();
    let sum = shuffle_sum_d(&xs, c, eps3, delta3, beta / 3.0, &source.derive("round-3", 0))?;
    ledger.finalize()?;
    let recentered: Vec<f64> = sum.value.iter().zip(&center_f).map(|(y, c)| y + c).collect();
    Ok(MeanEstimate {
        value: inverse_rotate(&ctx, &recentered)?,
        clip_threshold: c,
        clip_rank: m,
        ledger,
        fallback_zero: false,
        shift: Some(center_f),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode_all(xs: &[f64], params: &ShuffleParams, src: &RandomSource) -> Vec<u64> {
        xs.iter()
            .enumerate()
            .flat_map(|(i, &x)| shuffle_encode_1d(x, params, &mut src.derive(names::USER, i as u64).stream("shares")).unwrap())
            .collect()
    }

    #[test]
    fn default_parameters() {
        let p = shuffle_params(1000, 2.0, 1.0, 1e-6).unwrap();
        assert_eq!(p.sensitivity, 2000);
        assert_eq!(p.shares_per_user, 11);
        assert!(p.q.is_power_of_two() && p.q > 4 * 1000 * 2000);
        assert!(p.q > 1000 * p.sensitivity + 2 * p.headroom());
        assert_eq!(shuffle_params(1, 1.0, 1.0, 1e-6).unwrap().shares_per_user, 2);
        assert!(shuffle_params(10, 0.0, 1.0, 1e-6).is_err());
        assert!(shuffle_params(10, 1.0, 0.0, 1e-6).is_err());
    }

    #[test]
    fn noiseless_encodings_sum_to_fixed_point() {
        let p = shuffle_params(3, 1.0, 1.0, 1e-6).unwrap();
        let src = RandomSource::new(1).noiseless();
        let shares = shuffle_encode_1d(-1.0, &p, &mut src.stream("a")).unwrap();
        assert_eq!(shares.iter().fold(0u64, |a, &s| a.wrapping_add(s)) & (p.q - 1), 0);
        let shares = shuffle_encode_1d(0.5, &p, &mut src.stream("a")).unwrap();
        assert_eq!(shares.iter().fold(0u64, |a, &s| a.wrapping_add(s)) & (p.q - 1), 5);
        assert!(shuffle_encode_1d(1.5, &p, &mut src.stream("a")).is_err());
        let mean = shuffle_sum_1d(&[-1.0, 0.0, 1.0], &p, &src).unwrap();
        assert!(mean.abs() <= 1.0 / p.scale);
    }

    #[test]
    fn single_message_is_uniform() {
        let p = shuffle_params(100, 1.0, 1.0, 1e-6).unwrap();
        let src = RandomSource::new(2);
        let bins = 64u64;
        let mut counts = vec![0f64; bins as usize];
        let trials = 100_000;
        for i in 0..trials {
            let s = shuffle_encode_1d(0.3, &p, &mut src.derive("t", i).stream("s")).unwrap();
            counts[(s[s.len() - 1] / (p.q / bins)) as usize] += 1.0;
        }
        let e = trials as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        let dist = <statrs::distribution::ChiSquared>::new((bins - 1) as f64).unwrap();
        let pval = 1.0 - statrs::distribution::ContinuousCDF::cdf(&dist, chi2);
        assert!(pval > 0.01, "chi2 {chi2}, p {pval}");
    }

    #[test]
    fn noise_total_is_discrete_laplace() {
        let n = 10_000;
        let p = shuffle_params(n, 1.0, 1.0, 1e-6).unwrap();
        let trials = 300;
        let mut sq = 0.0;
        let mut sum = 0.0;
        for t in 0..trials {
            let mut s = RandomSource::new(t).stream("noise");
            let total: i64 = (0..n).map(|_| noise_share(&p, &mut s)).sum();
            sum += total as f64;
            sq += (total as f64).powi(2);
        }
        let var = sq / trials as f64;
        let want = p.noise_variance();
        assert!((sum / trials as f64).abs() < 4.0 * (want / trials as f64).sqrt());
        // 300 draws of a Laplace-like law: the variance estimate has ~12% relative error
        assert!((var / want - 1.0).abs() < 0.4, "{var} vs {want}");
    }

    #[test]
    fn decode_rejects_wraparound() {
        let p = shuffle_params(4, 1.0, 1.0, 1e-6).unwrap();
        let mut messages = vec![0u64; 4 * p.shares_per_user];
        messages[0] = p.q / 2;
        let err = shuffle_decode_1d(&ShuffleTranscript { messages }, 4, &p).unwrap_err();
        assert_eq!(err, Error::Wraparound { modulus: p.q, decoded: p.q / 2 });
    }

    #[test]
    fn noiseless_mean_d_is_exact() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 0.25]).collect();
        let truth: Vec<f64> = (0..3).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / 50.0).collect();
        let (est, sum) = shuffle_mean_d(&xs, 2.0, 1.0, 1e-6, 0.1, &RandomSource::new(3).noiseless()).unwrap();
        assert_eq!(sum.clipped_coordinates, 0);
        let res = sum.coordinate_bound / 50.0;
        for (a, b) in est.value.iter().zip(&truth) {
            assert!((a - b).abs() <= res, "{a} vs {b}");
        }
    }

    #[test]
    fn pipeline_noiseless_and_ledger() {
        let rows: Vec<Vec<i64>> = (0..60).map(|i| vec![i % 9, (i * 5) % 13, 7, i % 2, 3]).collect();
        let ds = Dataset::new(&rows, 15).unwrap();
        let est = shuffle_pipeline(&ds, 1.0, 1e-6, 0.1, &RandomSource::new(8).noiseless()).unwrap();
        est.ledger.finalize().unwrap();
        let truth = ds.mean();
        let res = est.clip_threshold * (2.0 * (4.0 * 60.0 * 8.0 / (0.1f64 / 3.0)).ln()).sqrt() / 60.0;
        for (a, b) in est.value.iter().zip(&truth) {
            assert!((a - b).abs() <= res, "{a} vs {b}");
        }
        let noisy = shuffle_pipeline(&ds, 1.0, 1e-6, 0.1, &RandomSource::new(8)).unwrap();
        assert!(noisy.fallback_zero);
        noisy.ledger.finalize().unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn exact_and_order_invariant(xs in prop::collection::vec(-3.0f64..3.0, 1..60), seed in any::<u64>()) {
            let p = shuffle_params(xs.len(), 3.0, 1.0, 1e-6).unwrap();
            let src = RandomSource::new(seed).noiseless();
            let messages = encode_all(&xs, &p, &src);
            let want: u64 = xs.iter().map(|x| (p.scale * (x + 3.0)).round() as u64).sum();
            let total = messages.iter().fold(0u64, |a, &m| a.wrapping_add(m)) & (p.q - 1);
            prop_assert_eq!(total, want);
            let noisy = encode_all(&xs, &p, &RandomSource::new(seed));
            let plain = shuffle_decode_1d(&ShuffleTranscript { messages: noisy.clone() }, xs.len(), &p).unwrap();
            let permuted = shuffle_messages(noisy, &mut RandomSource::new(seed ^ 1).stream(names::SHUFFLER));
            prop_assert_eq!(shuffle_decode_1d(&permuted, xs.len(), &p).unwrap(), plain);
        }
    }
}
