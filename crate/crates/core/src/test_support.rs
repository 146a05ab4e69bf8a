//! Seeded random instances shared by the unit test suites.

use crate::lab::{random_verify_instance, VerifyInstance};
use crate::numerics::{rng_from_seed, Seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InstanceKind {
    Rbf,
    Deep,
    /// Roughly half RBF, half deep, decided by the seed.
    Mixed,
}

pub(crate) fn random_instance(seed: Seed, kind: InstanceKind) -> VerifyInstance {
    let deep = match kind {
        InstanceKind::Rbf => false,
        InstanceKind::Deep => true,
        InstanceKind::Mixed => {
            use rand::Rng;
            rng_from_seed(seed.derive(0x01)).gen_bool(0.5)
        }
    };
    random_verify_instance(seed, deep)
}
