use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Independent families of substreams derived from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Paths,
    Nested,
    Probes,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Paths => 0x5041_5448,
            Domain::Nested => 0x4e45_5354,
            Domain::Probes => 0x5052_4f42,
        }
    }
}

/// ChaCha8 stream `index` of the key derived from `(seed, domain)`.
///
/// Streams are addressed directly, so a sample's randomness does not depend
/// on how many samples were drawn before it or on which thread runs it.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.tag().wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}

pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
