//! Distribution functions used by the acquisition and outlier classifier.
//! Evaluated in double precision through `statrs`.

use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma as ln_gamma_f64;

use crate::scalar::Scalar;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn norm_pdf<T: Scalar>(z: T) -> T {
    T::c(std_normal().pdf(z.as_f64()))
}

pub fn norm_cdf<T: Scalar>(z: T) -> T {
    T::c(std_normal().cdf(z.as_f64()))
}

pub fn ln_gamma<T: Scalar>(x: T) -> T {
    T::c(ln_gamma_f64(x.as_f64()))
}

/// Upper tail `P(T > t)` of a standard Student-t with `dof` degrees of freedom.
pub fn student_t_sf<T: Scalar>(t: T, dof: T) -> T {
    let dist = StudentsT::new(0.0, 1.0, dof.as_f64()).expect("positive dof");
    T::c(dist.sf(t.as_f64()))
}

/// `P(T < t)` of a standard Student-t.
pub fn student_t_cdf<T: Scalar>(t: T, dof: T) -> T {
    let dist = StudentsT::new(0.0, 1.0, dof.as_f64()).expect("positive dof");
    T::c(dist.cdf(t.as_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((norm_pdf(0.0f64) - 0.398_942_280_401_432_7).abs() < 1e-14);
        let c = norm_cdf(1.0f64);
        assert!((c - 0.841_344_746_068_542_9).abs() < 1e-10, "{c}");
        // t4 upper tail at 3: 1/2 - (3/sqrt(13))(1 + 9/(2·13))·... closed form for ν=4
        let t = 3.0f64;
        let closed = 0.5 - 0.5 * (t / (4.0 + t * t).sqrt()) * (1.0 + 2.0 / (4.0 + t * t));
        assert!((student_t_sf(t, 4.0) - closed).abs() < 1e-12);
        assert!((student_t_sf(3.0f64, 4.0) - 0.019_970_6).abs() < 1e-6);
        assert!((student_t_cdf(2.131_847f64, 4.0) - 0.95).abs() < 1e-6);
        assert!((ln_gamma(5.0f64) - 24f64.ln()).abs() < 1e-12);
    }
}
