use ndarray::NdFloat;

use super::{marching_cubes, ScalarGrid, TriangleMesh};
use crate::neural::{DecoderModel, Mode};
use crate::{Error, Result};

/// Unclamped decoder output at every lattice point of `[-h, h]^3`.
pub fn sample_grid<F: NdFloat>(model: &DecoderModel<F>, z: &[f64], res: usize, half_width: f64) -> Result<ScalarGrid> {
    if model.mode != Mode::Eval {
        return Err(Error::Invalid("grid sampling needs a decoder in eval mode".into()));
    }
    if z.len() != model.latent_dim() {
        return Err(Error::DimensionMismatch { expected: model.latent_dim(), got: z.len() });
    }
    let code: Vec<F> = z.iter().map(|&v| F::from(v).unwrap()).collect();
    ScalarGrid::from_slab_fn(res, half_width, |pts| {
        model.eval_points(&code, pts).expect("code length checked above")
    })
}

/// Zero level set of the decoded field for code `z`, clipped to the grid
/// cube so that it is always closed.
pub fn decode_mesh<F: NdFloat>(model: &DecoderModel<F>, z: &[f64], res: usize, half_width: f64) -> Result<TriangleMesh> {
    let mut grid = sample_grid(model, z, res, half_width)?;
    let clipped = grid.close_boundary(0.5 * grid.spacing());
    if clipped > 0 {
        log::debug!("{clipped} boundary lattice values were raised to close the surface");
    }
    Ok(marching_cubes(&grid, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::check_watertight;
    use crate::neural::DecoderConfig;

    #[test]
    fn tiny_grid_evaluates_corners() {
        let m = DecoderModel::<f32>::new(DecoderConfig { latent_dim: 2, hidden_layers: 1, width: 4, dropout: 0.0, batch_norm: true }, 1).unwrap();
        let g = sample_grid(&m, &[0.1, 0.2], 2, 1.0).unwrap();
        assert_eq!(g.values.len(), 8);
        let corner = m.forward(&[0.1f32, 0.2], crate::geom::Vec3::new(-1.0, -1.0, -1.0)).unwrap();
        assert!((g.values[0] - corner as f64).abs() < 1e-6);
    }

    /// Output layer rigged so the network computes `|x|`-like distance:
    /// with one hidden unit per signed axis, `sum relu(+-x_i) = |x|_1`.
    #[test]
    fn hand_built_decoder_gives_a_closed_octahedron() {
        let cfg = DecoderConfig { latent_dim: 1, hidden_layers: 1, width: 6, dropout: 0.0, batch_norm: false };
        let mut m = DecoderModel::<f64>::new(cfg, 1).unwrap();
        let mut w0 = m.net.weight_mut(0);
        w0.fill(0.0);
        for a in 0..3 {
            w0[[2 * a, 1 + a]] = 1.0;
            w0[[2 * a + 1, 1 + a]] = -1.0;
        }
        m.net.bias_mut(0).fill(0.0);
        m.net.weight_mut(1).fill(1.0);
        m.net.bias_mut(1).fill(-0.5);
        let mesh = decode_mesh(&m, &[0.0], 33, 1.0).unwrap();
        assert!(check_watertight(&mesh).watertight);
        // Octahedron |x|_1 <= 0.5 has volume 4/3 * 0.5^3.
        let want = 4.0 / 3.0 * 0.125;
        assert!((mesh.volume() - want).abs() < 0.02 * want, "{}", mesh.volume());
    }

    /// A field negative on part of the grid boundary still yields a closed
    /// surface once the boundary is raised.
    #[test]
    fn clipped_shapes_are_closed() {
        let mut g = crate::mesh::ScalarGrid::from_fn(24, 1.0, |p| p.norm() - 1.2).unwrap();
        assert!(!check_watertight(&marching_cubes(&g, 0.0)).watertight);
        assert!(g.close_boundary(0.5 * g.spacing()) > 0);
        assert!(check_watertight(&marching_cubes(&g, 0.0)).watertight);
    }

    #[test]
    fn training_mode_is_rejected() {
        let mut m = DecoderModel::<f32>::new(DecoderConfig { latent_dim: 2, hidden_layers: 1, width: 4, dropout: 0.0, batch_norm: true }, 1).unwrap();
        m.mode = Mode::Train;
        assert!(sample_grid(&m, &[0.0, 0.0], 4, 1.0).is_err());
        m.mode = Mode::Eval;
        assert!(matches!(sample_grid(&m, &[0.0], 4, 1.0), Err(Error::DimensionMismatch { .. })));
    }
}
