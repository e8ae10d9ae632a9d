//! Topological regularization of the latent space.
//!
//! For a bag with input instances X and latent instances Z, the loss selects
//! the distance-matrix entries named by the 0-dim persistence pairings of
//! either space and penalizes their disagreement:
//!
//! ```text
//! L_topo = 1/2 ||A_X[pi_X] - A_Z[pi_X]||^2  +  1/2 ||A_Z[pi_Z] - A_X[pi_Z]||^2
//! ```
//!
//! Pairings are recomputed on every forward pass but treated as constant
//! during backward; gradient flows only into the latent distance entries at
//! the selected indices. Latent distances are true Euclidean distances with
//! a small epsilon added under the square root so the derivative stays
//! finite when latent points coincide; the input-space entries selected by
//! the loss go through the identical kernel, which keeps the two sides
//! bit-comparable (an identity encoder yields a loss of exactly zero).

use crate::autodiff::{pairwise_sq, AutodiffError, Node, Tape};
use crate::persistence::{
    euclidean_distance_matrix, vr_persistence_0d, DistanceMatrix, PersistenceError,
    PersistencePairing,
};
use crate::tensor::Tensor;

/// Epsilon added under the square root of latent (and selected input)
/// distances.
pub const DISTANCE_EPSILON: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum TopoRegError {
    #[error("topo_loss: X has {x} instances but Z has {z}")]
    InstanceCountMismatch { x: usize, z: usize },
    #[error("topo_loss: Z must be rank-2, got shape {shape:?}")]
    BadLatentShape { shape: Vec<usize> },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
}

pub type Result<T> = std::result::Result<T, TopoRegError>;

/// Detached values of the two directed terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TopoLossBreakdown {
    /// Input-to-latent term (distances at the input-space pairing).
    pub forward_term: f64,
    /// Latent-to-input term (distances at the latent-space pairing).
    pub reverse_term: f64,
    pub total: f64,
}

/// Input-space distances run through the same epsilon-padded kernel as the
/// differentiable latent path.
fn padded_distances(x: &Tensor) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut out = pairwise_sq(x.data(), n, d);
    for v in &mut out {
        *v = (*v + DISTANCE_EPSILON).sqrt();
    }
    out
}

/// The topological loss with both pairings supplied by the caller.
///
/// This is the fixed-pairing core that gradient checks differentiate: the
/// pairings are data, not functions of `z`. [`topo_loss`] recomputes them
/// per forward pass and delegates here.
pub fn topo_loss_given_pairings<'t>(
    tape: &'t Tape,
    x: &Tensor,
    z: Node<'t>,
    pairing_x: &PersistencePairing,
    pairing_z: &PersistencePairing,
) -> Result<(Node<'t>, TopoLossBreakdown)> {
    let zshape = z.shape();
    if zshape.len() != 2 {
        return Err(TopoRegError::BadLatentShape { shape: zshape });
    }
    if x.rows() != zshape[0] {
        return Err(TopoRegError::InstanceCountMismatch {
            x: x.rows(),
            z: zshape[0],
        });
    }

    let n = x.rows();
    if n < 2 || (pairing_x.is_empty() && pairing_z.is_empty()) {
        return Ok((tape.scalar(0.0), TopoLossBreakdown::default()));
    }

    let x_entries = padded_distances(x);
    let latent_dist = z
        .pairwise_sq_dist()?
        .shift(DISTANCE_EPSILON)
        .sqrt()?;

    let half_sq_norm = |pairs: &[(usize, usize)]| -> Result<Option<Node<'t>>> {
        if pairs.is_empty() {
            return Ok(None);
        }
        let selected_x =
            tape.constant(&Tensor::vector(pairs.iter().map(|&(i, j)| x_entries[i * n + j]).collect()));
        let selected_z = latent_dist.gather(pairs)?;
        let term = selected_x
            .sub(selected_z)?
            .square()
            .sum(None)?
            .scale(0.5);
        Ok(Some(term))
    };

    let fwd = half_sq_norm(&pairing_x.edges)?;
    let rev = half_sq_norm(&pairing_z.edges)?;
    let (total, fwd_v, rev_v) = match (fwd, rev) {
        (Some(f), Some(r)) => (f.add(r)?, f.item(), r.item()),
        (Some(f), None) => (f, f.item(), 0.0),
        (None, Some(r)) => (r, 0.0, r.item()),
        (None, None) => unreachable!("guarded above"),
    };
    Ok((
        total,
        TopoLossBreakdown {
            forward_term: fwd_v,
            reverse_term: rev_v,
            total: total.item(),
        },
    ))
}

/// The topological regularization loss of a bag.
///
/// `x` are the input instances (constants), `z` the latent rows on the tape.
/// The input pairing comes from the plain Euclidean distance matrix of `x`;
/// the latent pairing from the detached values of the differentiable latent
/// distances (diagonal zeroed).
pub fn topo_loss<'t>(
    tape: &'t Tape,
    x: &Tensor,
    z: Node<'t>,
) -> Result<(Node<'t>, TopoLossBreakdown)> {
    let zshape = z.shape();
    if zshape.len() != 2 {
        return Err(TopoRegError::BadLatentShape { shape: zshape });
    }
    if x.rows() != zshape[0] {
        return Err(TopoRegError::InstanceCountMismatch {
            x: x.rows(),
            z: zshape[0],
        });
    }
    let n = x.rows();
    if n < 2 {
        return Ok((tape.scalar(0.0), TopoLossBreakdown::default()));
    }

    let pairing_x = vr_persistence_0d(&euclidean_distance_matrix(x)?);
    let pairing_z = latent_pairing(z)?;
    topo_loss_given_pairings(tape, x, z, &pairing_x, &pairing_z)
}

/// Pairing of the latent cloud from detached distance values.
pub fn latent_pairing(z: Node<'_>) -> Result<PersistencePairing> {
    let zshape = z.shape();
    let n = zshape[0];
    let values = z.value();
    let mut entries = pairwise_sq(values.data(), n, zshape[1]);
    for v in &mut entries {
        *v = (*v + DISTANCE_EPSILON).sqrt();
    }
    for i in 0..n {
        entries[i * n + i] = 0.0;
    }
    let matrix = DistanceMatrix::new(n, entries)?;
    Ok(vr_persistence_0d(&matrix))
}
