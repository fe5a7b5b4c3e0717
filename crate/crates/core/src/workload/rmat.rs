use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest scale whose vertex ids still fit the packed adjacency format.
pub const MAX_SCALE: u32 = 31;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RmatError {
    #[error("scale must be in 1..={MAX_SCALE}, got {0}")]
    Scale(u32),
    #[error("edgefactor must be at least 1")]
    Edgefactor,
    #[error("quadrant probabilities must be non-negative and sum to 1, got {0}")]
    Probabilities(f64),
    #[error("max_weight must be at least 1")]
    MaxWeight,
    #[error("edgefactor * 2^scale overflows")]
    TooManyEdges,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub weight: u32,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RmatParams {
    pub scale: u32,
    pub edgefactor: u32,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub max_weight: u32,
    pub seed: u64,
}

impl RmatParams {
    pub fn new(scale: u32, seed: u64) -> Self {
        RmatParams {
            scale,
            edgefactor: 8,
            a: 0.57,
            b: 0.19,
            c: 0.19,
            d: 0.05,
            max_weight: 255,
            seed,
        }
    }

    pub fn with_edgefactor(mut self, edgefactor: u32) -> Self {
        self.edgefactor = edgefactor;
        self
    }

    pub fn with_quadrants(mut self, a: f64, b: f64, c: f64, d: f64) -> Self {
        (self.a, self.b, self.c, self.d) = (a, b, c, d);
        self
    }

    pub fn vertices(&self) -> usize {
        1usize << self.scale
    }

    pub fn edge_count(&self) -> Result<usize, RmatError> {
        (self.edgefactor as usize)
            .checked_mul(self.vertices())
            .ok_or(RmatError::TooManyEdges)
    }

    pub fn validate(&self) -> Result<(), RmatError> {
        if self.scale == 0 || self.scale > MAX_SCALE {
            return Err(RmatError::Scale(self.scale));
        }
        if self.edgefactor == 0 {
            return Err(RmatError::Edgefactor);
        }
        let p = [self.a, self.b, self.c, self.d];
        let sum: f64 = p.iter().sum();
        if p.iter().any(|x| x.is_nan() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(RmatError::Probabilities(sum));
        }
        if self.max_weight == 0 {
            return Err(RmatError::MaxWeight);
        }
        self.edge_count().map(|_| ())
    }
}

/// Generates `edgefactor * 2^scale` edges. Each endpoint pair comes from
/// `scale` recursive quadrant choices, most significant bit first.
pub fn rmat_edges(params: &RmatParams) -> Result<Vec<Edge>, RmatError> {
    params.validate()?;
    let m = params.edge_count()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (ab, abc) = (params.a + params.b, params.a + params.b + params.c);
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (mut src, mut dst) = (0u32, 0u32);
        for _ in 0..params.scale {
            let r: f64 = rng.random();
            let (i, j) = if r < params.a {
                (0, 0)
            } else if r < ab {
                (0, 1)
            } else if r < abc {
                (1, 0)
            } else {
                (1, 1)
            };
            src = (src << 1) | i;
            dst = (dst << 1) | j;
        }
        let weight = rng.random_range(1..=params.max_weight);
        edges.push(Edge { src, dst, weight });
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_quadrant() {
        let p = RmatParams::new(4, 3).with_quadrants(1.0, 0.0, 0.0, 0.0);
        let e = rmat_edges(&p).unwrap();
        assert_eq!(e.len(), 128);
        assert!(e.iter().all(|e| e.src == 0 && e.dst == 0));
    }

    #[test]
    fn opposite_corner() {
        let p = RmatParams::new(5, 3).with_quadrants(0.0, 0.0, 0.0, 1.0);
        assert!(rmat_edges(&p)
            .unwrap()
            .iter()
            .all(|e| e.src == 31 && e.dst == 31));
    }

    #[test]
    fn validation() {
        assert_eq!(RmatParams::new(0, 1).validate(), Err(RmatError::Scale(0)));
        assert_eq!(RmatParams::new(32, 1).validate(), Err(RmatError::Scale(32)));
        assert!(matches!(
            RmatParams::new(4, 1)
                .with_quadrants(0.5, 0.5, 0.5, 0.0)
                .validate(),
            Err(RmatError::Probabilities(_))
        ));
        assert!(matches!(
            RmatParams::new(4, 1)
                .with_quadrants(1.2, -0.2, 0.0, 0.0)
                .validate(),
            Err(RmatError::Probabilities(_))
        ));
        assert_eq!(
            RmatParams::new(4, 1).with_edgefactor(0).validate(),
            Err(RmatError::Edgefactor)
        );
    }

    #[test]
    fn deterministic_and_in_range() {
        let p = RmatParams::new(8, 42);
        let a = rmat_edges(&p).unwrap();
        assert_eq!(a, rmat_edges(&p).unwrap());
        assert_ne!(a, rmat_edges(&RmatParams::new(8, 43)).unwrap());
        assert!(a
            .iter()
            .all(|e| e.src < 256 && e.dst < 256 && (1..=255).contains(&e.weight)));
    }
}
