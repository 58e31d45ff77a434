mod common;

use common::{normal_pdf, simpson, simpson2};
use lsdd_core::data::truth::{gaussian_shift_l2, outlier_mixture_kl, outlier_mixture_l2};
use lsdd_core::data::synth::shift_sd;
use lsdd_core::kde::{kde_eval, kde_l2, KdeModel};
use lsdd_core::kernel::{basis_moments, gram_matrix};
use lsdd_core::lsdd::{squared_norm, weighted_cv, SpectralCv};
use lsdd_core::rng::seeded;
use lsdd_core::*;
use rand_distr::{Distribution, StandardNormal};

fn scalars(rng: &mut Rng, n: usize, shift: f64) -> SampleSet {
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).map(|z: f64| z + shift).collect();
    SampleSet::from_scalars(&v).unwrap()
}

#[test]
fn gram_matches_quadrature_1d() {
    for (centers, width) in [
        (vec![0.0], 1.0),
        (vec![-1.0, 0.5, 2.0], 0.7),
        (vec![-2.0, -1.0, 0.0, 1.5, 3.0], 1.3),
    ] {
        let basis = GaussianBasis::new(SampleSet::from_scalars(&centers).unwrap(), width).unwrap();
        let exact = gram_matrix(&basis);
        let quad = common::gram_by_quadrature(&centers, width);
        assert!((exact - quad).amax() < 1e-6);
    }
}

#[test]
fn gram_matches_quadrature_2d() {
    let pts = vec![vec![0.0, 0.0], vec![0.8, -0.4], vec![-0.5, 1.0]];
    let width = 0.6;
    let basis = GaussianBasis::new(SampleSet::new(pts.clone()).unwrap(), width).unwrap();
    let exact = gram_matrix(&basis);
    let k = |x: f64, y: f64, c: &[f64]| (-((x - c[0]).powi(2) + (y - c[1]).powi(2)) / (2.0 * width * width)).exp();
    for i in 0..3 {
        for j in 0..3 {
            let v = simpson2(&|x, y| k(x, y, &pts[i]) * k(x, y, &pts[j]), (-6.0, 6.0), (-6.0, 6.0), 1e-10);
            assert!((exact[(i, j)] - v).abs() < 1e-6, "({i},{j}) {} vs {v}", exact[(i, j)]);
        }
    }
}

#[test]
fn psi_moment_oracle_agrees_with_quadrature() {
    let centers = [-1.0, 0.4, 1.5];
    let (mean, cov) = common::psi_moments(&centers, 0.8, 0.3, 1.7);
    let sd = 1.7f64.sqrt();
    let k = |x: f64, c: f64| (-(x - c).powi(2) / (2.0 * 0.64)).exp();
    for i in 0..3 {
        let m = simpson(&|x| k(x, centers[i]) * normal_pdf(x, 0.3, sd), -15.0, 15.0, 1e-12);
        assert!((mean[i] - m).abs() < 1e-9);
        for j in 0..3 {
            let s = simpson(&|x| k(x, centers[i]) * k(x, centers[j]) * normal_pdf(x, 0.3, sd), -15.0, 15.0, 1e-12);
            assert!((cov[(i, j)] - (s - m * mean[j])).abs() < 1e-9);
        }
    }
}

#[test]
fn fitted_model_norm_matches_quadrature() {
    let mut rng = seeded(11);
    let x = scalars(&mut rng, 40, 0.0);
    let xp = scalars(&mut rng, 40, 1.0);
    let centers = x.concat(&xp).unwrap();
    let model = fit_fixed(&x, &xp, 0.5, 0.1, &centers).unwrap();
    let quad = simpson(&|t| model.eval(&[t]).unwrap().powi(2), -10.0, 12.0, 1e-12);
    assert!((squared_norm(&model) - quad).abs() < 1e-8);
}

#[test]
fn kde_integrates_to_one() {
    let mut rng = seeded(3);
    let x = scalars(&mut rng, 30, 0.0);
    let m = KdeModel::new(x, 0.4).unwrap();
    let total = simpson(&|t| kde_eval(&m, &[t]).unwrap(), -12.0, 12.0, 1e-11);
    assert!((total - 1.0).abs() < 1e-8);

    let pts = SampleSet::new(vec![vec![0.0, 0.1], vec![0.5, -0.3], vec![-0.4, 0.2]]).unwrap();
    let m2 = KdeModel::new(pts, 0.5).unwrap();
    let total2 = simpson2(&|a, b| kde_eval(&m2, &[a, b]).unwrap(), (-6.0, 6.0), (-6.0, 6.0), 1e-9);
    assert!((total2 - 1.0).abs() < 1e-6);
}

#[test]
fn kde_l2_matches_quadrature() {
    let mut rng = seeded(8);
    let p = KdeModel::new(scalars(&mut rng, 25, 0.0), 0.35).unwrap();
    let q = KdeModel::new(scalars(&mut rng, 20, 0.7), 0.5).unwrap();
    let quad = simpson(
        &|t| (kde_eval(&p, &[t]).unwrap() - kde_eval(&q, &[t]).unwrap()).powi(2),
        -12.0,
        12.0,
        1e-12,
    );
    assert!((kde_l2(&p, &q).unwrap() - quad).abs() < 1e-8);
}

#[test]
fn shift_truth_matches_quadrature() {
    let s = shift_sd();
    for mu in [0.0, 0.2, 0.5, 0.8] {
        let quad = simpson(&|t| (normal_pdf(t, mu, s) - normal_pdf(t, 0.0, s)).powi(2), -5.0, 6.0, 1e-12);
        assert!((gaussian_shift_l2(mu) - quad).abs() < 1e-8, "mu={mu}");
    }
}

#[test]
fn outlier_truths_match_quadrature() {
    for (eta, mu) in [(0.0, 10.0), (0.1, 10.0), (0.05, 2.0), (0.3, 0.5)] {
        let p = |t: f64| (1.0 - eta) * normal_pdf(t, 0.0, 1.0) + eta * normal_pdf(t, mu, 0.25);
        let q = |t: f64| normal_pdf(t, 0.0, 1.0);
        // split at the component means so no narrow bump falls between the first samples
        let mut knots = [-15.0, -1.0, 1.0, mu - 1.0, mu + 1.0, mu + 15.0];
        knots.sort_by(f64::total_cmp);
        let integrate = |f: &dyn Fn(f64) -> f64, tol: f64| -> f64 {
            knots.windows(2).filter(|w| w[1] > w[0]).map(|w| simpson(&f, w[0], w[1], tol)).sum()
        };
        let l2 = integrate(&|t| (p(t) - q(t)).powi(2), 1e-13);
        assert!((outlier_mixture_l2(eta, mu) - l2).abs() < 1e-8, "l2 eta={eta} mu={mu}");
        let kl = integrate(
            &|t| {
                let pt = p(t);
                if pt > 1e-300 {
                    pt * (pt.ln() - q(t).ln())
                } else {
                    0.0
                }
            },
            1e-12,
        );
        assert!((outlier_mixture_kl(eta, mu).unwrap() - kl).abs() < 1e-6, "kl eta={eta} mu={mu}");
    }
}

#[test]
fn spectral_cv_agrees_with_weighted_cv() {
    let mut rng = seeded(21);
    let x = scalars(&mut rng, 23, 0.0);
    let xp = scalars(&mut rng, 19, 0.8);
    let pooled = x.concat(&xp).unwrap();
    let centers = pooled.select(&(0..pooled.len()).step_by(2).collect::<Vec<_>>()).unwrap();
    let grid = HyperGrid::new(vec![0.3, 0.7, 1.5], vec![1e-3, 0.1, 1.0]).unwrap();

    let direct = weighted_cv(&[(&x, 1.0), (&xp, -1.0)], &centers, &grid, 4, &mut seeded(5)).unwrap();
    let engine = SpectralCv::new(&pooled, &centers, grid.clone()).unwrap();
    let first: Vec<usize> = (0..x.len()).collect();
    let second: Vec<usize> = (x.len()..pooled.len()).collect();
    let groups = [(first.as_slice(), 1.0), (second.as_slice(), -1.0)];
    let (spectral, value) = engine.select_and_estimate(&groups, 4, &mut seeded(5)).unwrap();

    assert_eq!(direct.selected_index, spectral.selected_index);
    for (a, b) in direct.candidates.iter().zip(&spectral.candidates) {
        assert!((a.mean_score - b.mean_score).abs() <= 1e-9 * (1.0 + a.mean_score.abs()));
    }
    let model = fit_fixed(&x, &xp, direct.selected_sigma, direct.selected_lambda, &centers).unwrap();
    let est = estimates_for_model(&model, &x, &xp).unwrap();
    assert!((est.combined - value).abs() < 1e-9);
}

#[test]
fn bias_term_matches_analytic_moments_in_the_large_sample_limit() {
    // empirical moments from a large sample approach the closed form
    let centers = [-1.0, 0.0, 1.0];
    let basis = GaussianBasis::new(SampleSet::from_scalars(&centers).unwrap(), 1.0).unwrap();
    let mut rng = seeded(2);
    let x = scalars(&mut rng, 200_000, 0.5);
    let emp = basis_moments(&basis, &x).unwrap();
    let (mean, cov) = common::psi_moments(&centers, 1.0, 0.5, 1.0);
    assert!((emp.mean - mean).amax() < 5e-3);
    assert!((emp.cov - cov).amax() < 5e-3);
}
