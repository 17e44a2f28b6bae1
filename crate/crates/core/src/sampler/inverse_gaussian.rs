use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Draw from the inverse Gaussian (Wald) law with mean `mu` and shape `lambda`
/// by the transformation-with-rejection method (Michael, Schucany and Haas).
///
/// The smaller root is evaluated as `4 mu^2 lambda chi / (s + mu chi)^2`, which
/// avoids the cancellation of the textbook form when `mu chi >> lambda`.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> f64 {
    debug_assert!(mu > 0.0 && lambda > 0.0);
    let g: f64 = StandardNormal.sample(rng);
    let chi = g * g;
    if chi == 0.0 {
        return mu;
    }
    let mu_chi = mu * chi;
    let s = (4.0 * mu * lambda * chi + mu_chi * mu_chi).sqrt();
    let denom = s + mu_chi;
    let y = 4.0 * mu * mu * lambda * chi / (denom * denom);
    let u: f64 = rng.random();
    if u * (mu + y) <= mu {
        y
    } else {
        // mu^2 / y
        denom * denom / (4.0 * lambda * chi)
    }
}
