use adaoais_core::oracle::{QuadratureGrid, Scheme};
use adaoais_core::proposals::{BetaProposalParams, GaussianProposalParams};
use adaoais_core::{ParamVector, ProposalFamily, ProposalParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ContinuousCDF};

const N: usize = 100_000;

fn gaussian_theta(fam: &ProposalFamily) -> ParamVector {
    let p =
        GaussianProposalParams::from_covariance(vec![0.5, -1.5], &[2.0, 0.6, 0.6, 0.9]).unwrap();
    fam.pack(&ProposalParams::Gaussian(p)).unwrap()
}

fn beta_theta(a: f64, b: f64) -> ParamVector {
    ProposalFamily::Beta
        .pack(&ProposalParams::Beta(
            BetaProposalParams::from_shape(a, b).unwrap(),
        ))
        .unwrap()
}

fn assert_mean_score_zero(fam: &ProposalFamily, theta: &ParamVector, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = fam.prepare(theta).unwrap();
    let pts = q.sample(&mut rng, N);
    let p = fam.param_len();
    let mut sum = vec![0.0; p];
    let mut sq = vec![0.0; p];
    let mut s = vec![0.0; p];
    for x in pts.iter() {
        q.score_into(x, &mut s).unwrap();
        for j in 0..p {
            sum[j] += s[j];
            sq[j] += s[j] * s[j];
        }
    }
    for j in 0..p {
        let mean = sum[j] / N as f64;
        let var = sq[j] / N as f64 - mean * mean;
        let se = (var / N as f64).sqrt();
        assert!(
            mean.abs() < 4.0 * se,
            "coordinate {j}: mean {mean}, se {se}"
        );
    }
}

#[test]
fn scores_have_zero_mean() {
    let g = ProposalFamily::gaussian(2);
    assert_mean_score_zero(&g, &gaussian_theta(&g), 1);
    let m = ProposalFamily::gaussian_mean(&[2.0, 0.6, 0.6, 0.9]).unwrap();
    assert_mean_score_zero(&m, &ParamVector::new(vec![0.5, -1.5]).unwrap(), 2);
    assert_mean_score_zero(&ProposalFamily::Beta, &beta_theta(2.0, 3.0), 3);
    assert_mean_score_zero(&ProposalFamily::Beta, &beta_theta(0.7, 5.0), 4);
}

#[test]
fn gaussian_samples_reproduce_covariance() {
    let fam = ProposalFamily::gaussian(2);
    let q = fam.prepare(&gaussian_theta(&fam)).unwrap();
    let pts = q.sample(&mut ChaCha8Rng::seed_from_u64(5), N);
    let n = N as f64;
    let mean: Vec<f64> = (0..2)
        .map(|i| pts.iter().map(|x| x[i]).sum::<f64>() / n)
        .collect();
    let target = [2.0, 0.6, 0.6, 0.9];
    for i in 0..2 {
        for j in 0..2 {
            let c = pts
                .iter()
                .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]))
                .sum::<f64>()
                / (n - 1.0);
            let t = target[i * 2 + j];
            assert!(
                (c - t).abs() <= 0.05 * t.abs(),
                "cov[{i}{j}] = {c}, expected {t}"
            );
        }
    }
    assert!((mean[0] - 0.5).abs() < 4.0 * (2.0f64 / n).sqrt());
    assert!((mean[1] + 1.5).abs() < 4.0 * (0.9f64 / n).sqrt());
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn beta_samples_pass_ks() {
    let fam = ProposalFamily::Beta;
    let draw = |a, b, seed| {
        let q = fam.prepare(&beta_theta(a, b)).unwrap();
        q.sample(&mut ChaCha8Rng::seed_from_u64(seed), N)
            .as_slice()
            .to_vec()
    };
    let d = ks_statistic(draw(1.0, 1.0, 6), |x| x);
    assert!(d < 0.01, "uniform KS {d}");

    let dist = Beta::new(2.0, 5.0).unwrap();
    let d = ks_statistic(draw(2.0, 5.0, 7), |x| dist.cdf(x));
    assert!(d < 0.01, "Beta(2,5) KS {d}");
}

#[test]
fn densities_integrate_to_one() {
    let fam = ProposalFamily::gaussian(2);
    let theta = gaussian_theta(&fam);
    let grid = QuadratureGrid::uniform(
        vec![(-12.0, 13.0), (-12.0, 9.0)],
        256,
        Scheme::GaussLegendre,
    )
    .unwrap();
    let total = grid.integrate(|x| fam.log_density(&theta, x).unwrap().exp());
    assert!((total - 1.0).abs() < 1e-4, "{total}");

    let theta = beta_theta(2.5, 1.5);
    let grid = QuadratureGrid::uniform(vec![(0.0, 1.0)], 256, Scheme::GaussLegendre).unwrap();
    let total = grid.integrate(|x| ProposalFamily::Beta.log_density(&theta, x).unwrap().exp());
    assert!((total - 1.0).abs() < 1e-4, "{total}");
}
