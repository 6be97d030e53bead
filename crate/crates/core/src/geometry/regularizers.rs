use super::{Adjacency, Vec3};

/// Per-vertex offsets from the pristine mesh, in the object frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Displacement(pub Vec<Vec3>);

impl Displacement {
    pub fn zeros(n: usize) -> Self {
        Displacement(vec![Vec3::ZERO; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    /// Flattened `[x0, y0, z0, x1, ...]` view.
    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|d| d.to_array()).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        assert_eq!(flat.len() % 3, 0);
        Displacement(flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
    }
}

/// Smoothness penalty `Σ_i Σ_{q ∈ N(i)} ‖Δv_i − Δv_q‖²` and its gradient.
///
/// Every ordered neighbor pair is counted, so each mesh edge contributes twice.
pub fn laplacian_loss(disp: &[Vec3], adjacency: &Adjacency) -> (f64, Vec<Vec3>) {
    assert_eq!(disp.len(), adjacency.len(), "adjacency does not match displacement");
    let mut value = 0.0;
    let mut grad = vec![Vec3::ZERO; disp.len()];
    for (i, di) in disp.iter().enumerate() {
        for &q in adjacency.neighbors(i) {
            let diff = *di - disp[q];
            value += diff.norm_squared();
            grad[i] += diff * 2.0;
            grad[q] -= diff * 2.0;
        }
    }
    (value, grad)
}

/// Magnitude penalty `Σ_i ‖Δv_i‖²`; the gradient is exactly `2Δv`.
pub fn l2_loss(disp: &[Vec3]) -> (f64, Vec<Vec3>) {
    let value = disp.iter().map(|d| d.norm_squared()).sum();
    (value, disp.iter().map(|d| *d * 2.0).collect())
}
