//! Small reference models used across tests, examples, and the CLI
//! suites. Every constant here is part of the crate's regression
//! surface: tests pin exact certificate values for these models.

use nalgebra::{DMatrix, DVector};

use super::{
    build_patch_family, build_quadratic_potential, singleton_family, Model, PatchFamily,
    QuadraticPotential,
};

fn plain_potential(j: DMatrix<f64>) -> QuadraticPotential {
    let n = j.nrows();
    build_quadratic_potential(j, DVector::zeros(n), None, None).expect("preset potentials are valid")
}

/// Two sites with unit self-precision and symmetric coupling `b`:
/// `J = [[1, b], [b, 1]]`. Positive definite for `|b| < 1`.
pub fn two_site(b: f64) -> (Model, PatchFamily) {
    let model = Model::gaussian(plain_potential(DMatrix::from_row_slice(
        2,
        2,
        &[1.0, b, b, 1.0],
    )))
    .expect("|b| < 1 expected");
    (model, singleton_family(2))
}

/// Path of `n` sites: `J = I + c * adjacency(path)`. Positive definite
/// for `|c| * 2 cos(pi / (n+1)) < 1`.
pub fn gaussian_chain(n: usize, c: f64) -> (Model, PatchFamily) {
    let mut j = DMatrix::identity(n, n);
    for i in 0..n.saturating_sub(1) {
        j[(i, i + 1)] = c;
        j[(i + 1, i)] = c;
    }
    let model = Model::gaussian(plain_potential(j)).expect("coupling below spectral threshold");
    (model, singleton_family(n))
}

/// Precision matrix of the `rows x cols` lattice model,
/// `I + c * adjacency`, sites numbered row-major. Exposed separately
/// because the matrix is meaningful (as a potential) even when it is
/// not positive definite and no joint measure exists.
pub fn lattice_precision(rows: usize, cols: usize, c: f64) -> DMatrix<f64> {
    let n = rows * cols;
    let mut j = DMatrix::identity(n, n);
    let at = |r: usize, col: usize| r * cols + col;
    for r in 0..rows {
        for col in 0..cols {
            if col + 1 < cols {
                j[(at(r, col), at(r, col + 1))] = c;
                j[(at(r, col + 1), at(r, col))] = c;
            }
            if r + 1 < rows {
                j[(at(r, col), at(r + 1, col))] = c;
                j[(at(r + 1, col), at(r, col))] = c;
            }
        }
    }
    j
}

/// `rows x cols` lattice with nearest-neighbour coupling `c`:
/// `J = I + c * adjacency`. Sites are numbered row-major.
pub fn lattice2d(rows: usize, cols: usize, c: f64) -> Result<(Model, PatchFamily), super::ModelError> {
    let n = rows * cols;
    let model = Model::gaussian(plain_potential(lattice_precision(rows, cols, c)))?;
    Ok((model, singleton_family(n)))
}

/// The two-site model discretized on symmetric `levels`-point axes
/// spanning `[-half_width, half_width]` per site.
pub fn grid_two_site(b: f64, levels: usize, half_width: f64) -> (Model, PatchFamily) {
    assert!(levels >= 2);
    let axis: Vec<f64> = (0..levels)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (levels - 1) as f64)
        .collect();
    let potential = plain_potential(DMatrix::from_row_slice(2, 2, &[1.0, b, b, 1.0]));
    let model = Model::grid_from_potential(potential, vec![axis.clone(), axis])
        .expect("preset grid is valid");
    (model, singleton_family(2))
}

/// Overlapping edge patches `{0,1}, {1,2}, ..., {n-2, n-1}` plus the two
/// endpoint singletons so coverage is uniform (`nu = 2` everywhere).
pub fn edge_family(n: usize) -> PatchFamily {
    assert!(n >= 2);
    let mut members: Vec<(Vec<usize>, u32)> = (0..n - 1).map(|i| (vec![i, i + 1], 1)).collect();
    members.push((vec![0], 1));
    members.push((vec![n - 1], 1));
    build_patch_family(n, &members).expect("edges cover")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build() {
        let (m, fam) = two_site(0.5);
        assert_eq!(m.site_count(), 2);
        assert_eq!(fam.total(), 2);

        let (m, _) = gaussian_chain(5, 0.2);
        assert_eq!(m.site_count(), 5);

        let (m, _) = lattice2d(3, 3, 0.2).unwrap();
        assert_eq!(m.site_count(), 9);

        let (m, _) = grid_two_site(0.5, 7, 2.5);
        assert_eq!(m.as_grid().unwrap().measure.state_count(), 49);
    }

    #[test]
    fn strong_lattice_coupling_loses_positive_definiteness() {
        // 2 cos(pi/4) * sqrt(2) ... for the 3x3 lattice the adjacency
        // spectral radius is 2 sqrt(2) approx 2.83, so c = 0.6 makes
        // I + cA indefinite.
        assert!(lattice2d(3, 3, 0.6).is_err());
    }

    #[test]
    fn edge_family_has_uniform_double_coverage() {
        let fam = edge_family(4);
        for k in 0..4 {
            assert_eq!(fam.coverage(k), 2);
        }
        assert_eq!(fam.min_coverage(), 2);
        assert_eq!(fam.max_patch_size(), 2);
    }
}
