//! Local densities, singular integrals and integral-point counts for
//! indefinite ternary quadratic forms `f(x, y, z) = a`.
//!
//! The modules build the two sides of the counting asymptotic
//! `N(f, a, T) ~ prod_p (1 - 1/p) alpha_p(f, a) * log T * vol(T)` (or the
//! linear law in the non-square case) and compare them:
//!
//! * [`forms`]: exact invariants and the square / non-square classifier;
//! * [`local_density`]: `alpha_p` by stabilized counting mod `p^k`, and the
//!   closed-form table for `x^2 + y^2 - delta z^2 = 1`;
//! * [`euler_product`]: the finite constant, `L(1, chi)`, number-field prefactor;
//! * [`archimedean`]: the Leray volume of the norm ball on the surface;
//! * [`enumeration`]: exact integral-point counts;
//! * [`asymptotics`]: predictions and convergence ladders.

pub mod archimedean;
pub mod arith;
pub mod asymptotics;
pub mod enumeration;
pub mod euler_product;
pub mod forms;
pub mod local_density;

pub use archimedean::{closed_form_family, leray_quadrature, ArchError, ArchIntegral, ArchMethod};
pub use asymptotics::{predict, verify, AsymError, Prediction, VerifyReport};
pub use enumeration::{count_family_fast, count_generic, cross_check, r2, CountResult, EnumError};
pub use euler_product::{
    dirichlet_l1, finite_constant_square_case, nonsquare_constant_family, prefactor_numberfield, DensitySource,
    EulerConstant, EulerError, LValue,
};
pub use forms::{FormError, NormKind, NormSpec, RegimeClass, Target, TernaryForm};
pub use local_density::{alpha_p_brute, alpha_p_closed_family, count_mod_pk, DensityError, LocalDensity};

/// Whether a failure is about the input (the mathematics does not apply)
/// or about the computation (a cap, guard, or numerical budget was hit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Domain,
    Resource,
}

pub trait Classify {
    fn class(&self) -> ErrorClass;
}

impl Classify for FormError {
    fn class(&self) -> ErrorClass {
        match self {
            FormError::Overflow => ErrorClass::Resource,
            _ => ErrorClass::Domain,
        }
    }
}

impl Classify for arith::FactorError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Resource
    }
}

impl Classify for DensityError {
    fn class(&self) -> ErrorClass {
        match self {
            DensityError::NotPrime(_) => ErrorClass::Domain,
            DensityError::CapExceeded { .. } | DensityError::NotStabilized { .. } => ErrorClass::Resource,
        }
    }
}

impl Classify for EulerError {
    fn class(&self) -> ErrorClass {
        match self {
            EulerError::Form(e) => e.class(),
            EulerError::Density(e) => e.class(),
            EulerError::Factor(e) => e.class(),
            EulerError::Disagreement { .. } => ErrorClass::Resource,
            EulerError::NotSquareCase | EulerError::NotApplicable(_) | EulerError::InvalidArgument(_) => {
                ErrorClass::Domain
            }
        }
    }
}

impl Classify for ArchError {
    fn class(&self) -> ErrorClass {
        match self {
            ArchError::Form(e) => e.class(),
            ArchError::InvalidRadius(_) => ErrorClass::Domain,
            ArchError::QuadratureFailure { .. } => ErrorClass::Resource,
        }
    }
}

impl Classify for EnumError {
    fn class(&self) -> ErrorClass {
        match self {
            EnumError::Form(e) => e.class(),
            EnumError::Factor(e) => e.class(),
            EnumError::InvalidRadius(_) | EnumError::NotFamily => ErrorClass::Domain,
            EnumError::Overflow { .. } | EnumError::Mismatch { .. } => ErrorClass::Resource,
        }
    }
}

impl Classify for AsymError {
    fn class(&self) -> ErrorClass {
        match self {
            AsymError::Form(e) => e.class(),
            AsymError::Euler(e) => e.class(),
            AsymError::Arch(e) => e.class(),
            AsymError::Enum(e) => e.class(),
            AsymError::NotApplicable(_) | AsymError::InvalidLadder(_) => ErrorClass::Domain,
        }
    }
}
