use crate::jets::{seed, Dual};
use crate::linalg::{inverse, Mat};
use crate::structure::adapted_frame;

use super::{GeomError, Model};

pub type T4 = Vec<Vec<Vec<Vec<f64>>>>;

fn zeros4(d: usize) -> T4 {
    vec![vec![vec![vec![0.0; d]; d]; d]; d]
}

/// `R^ρ_{σμν}` from Christoffels and their derivatives `dgamma[λ][ν][μ][ρ] = ∂_λ Γ^ν_{μρ}`.
fn riemann_from(gamma: &[Mat<f64>], dgamma: &[Vec<Mat<f64>>]) -> T4 {
    let d = gamma.len();
    let mut r = zeros4(d);
    for rho in 0..d {
        for sig in 0..d {
            for mu in 0..d {
                for nu in 0..d {
                    let mut s = dgamma[mu][rho][nu][sig] - dgamma[nu][rho][mu][sig];
                    for l in 0..d {
                        s += gamma[rho][mu][l] * gamma[l][nu][sig] - gamma[rho][nu][l] * gamma[l][mu][sig];
                    }
                    r[rho][sig][mu][nu] = s;
                }
            }
        }
    }
    r
}

/// Standard-convention `R^ρ_{σμν}` (so that `R_std(X,Y)Z = ∇_X∇_Y Z − ...`)
/// from Christoffels carrying first derivatives.
pub fn riemann_coords(gamma: &[Mat<Dual<f64>>]) -> T4 {
    let d = gamma.len();
    let g0: Vec<Mat<f64>> = gamma.iter().map(|m| m.iter().map(|r| r.iter().map(|v| v.v).collect()).collect()).collect();
    let dg: Vec<Vec<Mat<f64>>> = (0..d)
        .map(|l| gamma.iter().map(|m| m.iter().map(|r| r.iter().map(|v| v.d[l]).collect()).collect()).collect())
        .collect();
    riemann_from(&g0, &dg)
}

/// Paper-convention (0,4) tensor in a frame:
/// `Rm[α][β][γ][δ] = g(R(e_α, e_β) e_γ, e_δ)` with `R(X,Y) = −R_std(X,Y)`.
pub fn frame_riemann(g: &Mat<f64>, e: &[Vec<f64>], r: &T4) -> T4 {
    let d = g.len();
    // lower the first index
    let mut low = zeros4(d);
    for k in 0..d {
        for s in 0..d {
            for m in 0..d {
                for n in 0..d {
                    low[k][s][m][n] = (0..d).map(|rho| g[rho][k] * r[rho][s][m][n]).sum();
                }
            }
        }
    }
    let contract_first = |t: &T4| -> T4 {
        // contracts slot 0 with the frame and rotates it to the back
        let mut out = zeros4(d);
        for a in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        out[i][j][k][a] = (0..d).map(|c| e[a][c] * t[c][i][j][k]).sum();
                    }
                }
            }
        }
        out
    };
    // slots (κ,σ,μ,ν) -> (σ,μ,ν,δ) -> (μ,ν,δ,γ) -> (ν,δ,γ,α) -> (δ,γ,α,β)
    let mut t = low;
    for _ in 0..4 {
        t = contract_first(&t);
    }
    let mut rm = zeros4(d);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for dd in 0..d {
                    rm[a][b][c][dd] = -t[dd][c][a][b];
                }
            }
        }
    }
    rm
}

/// Frame components of the standard Ricci tensor `Ric_{σν} = R^μ_{σμν}`.
pub fn frame_ricci(e: &[Vec<f64>], r: &T4) -> Mat<f64> {
    let d = e.len();
    let mut ric = vec![vec![0.0; d]; d];
    for s in 0..d {
        for n in 0..d {
            ric[s][n] = (0..d).map(|m| r[m][s][m][n]).sum();
        }
    }
    let mut out = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let mut v = 0.0;
            for s in 0..d {
                for n in 0..d {
                    v += e[a][s] * ric[s][n] * e[b][n];
                }
            }
            out[a][b] = v;
        }
    }
    out
}

/// Sectional curvature of the plane `e_a ∧ e_b` (paper convention).
pub fn sectional(rm: &T4, eps: &[f64], a: usize, b: usize) -> f64 {
    rm[a][b][a][b] / (eps[a] * eps[b])
}

/// Curvature from order-2 metric jets, without nested duals. Serves as the
/// cheap path for integrands and as an independent check.
#[derive(Debug, Clone)]
pub struct CurvatureFast {
    pub n: usize,
    pub eps: Vec<f64>,
    pub rm: T4,
    pub det: f64,
}

impl CurvatureFast {
    pub fn new<M: Model>(m: &M, x: &[f64]) -> Result<Self, GeomError> {
        let d = m.dim();
        let jets = seed(x, 2).map_err(|e| GeomError::Specialization(e.to_string()))?;
        let gj = m.metric(&jets)?;
        let g: Mat<f64> = gj.iter().map(|r| r.iter().map(|v| v.value()).collect()).collect();
        let ginv = inverse(&g).ok_or_else(|| GeomError::singular("metric", x))?;
        let span = m.span(x)?;
        let fr = adapted_frame(&g, &span).map_err(|w| GeomError::singular(w, x))?;
        let c = |k: usize, mu: usize, rho: usize| gj[mu][k].d(rho) + gj[rho][k].d(mu) - gj[mu][rho].d(k);
        let dc = |l: usize, k: usize, mu: usize, rho: usize| {
            gj[mu][k].dd(rho, l) + gj[rho][k].dd(mu, l) - gj[mu][rho].dd(k, l)
        };
        let mut gamma = vec![vec![vec![0.0; d]; d]; d];
        for nu in 0..d {
            for mu in 0..d {
                for rho in 0..d {
                    gamma[nu][mu][rho] = 0.5 * (0..d).map(|k| ginv[nu][k] * c(k, mu, rho)).sum::<f64>();
                }
            }
        }
        // ∂_λ g^{νκ} = −g^{να} ∂_λ g_αβ g^{βκ}
        let mut dginv = vec![vec![vec![0.0; d]; d]; d];
        for l in 0..d {
            for nu in 0..d {
                for k in 0..d {
                    let mut s = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            s += ginv[nu][a] * gj[a][b].d(l) * ginv[b][k];
                        }
                    }
                    dginv[l][nu][k] = -s;
                }
            }
        }
        let mut dgamma = vec![vec![vec![vec![0.0; d]; d]; d]; d];
        for l in 0..d {
            for nu in 0..d {
                for mu in 0..d {
                    for rho in 0..d {
                        let mut s = 0.0;
                        for k in 0..d {
                            s += dginv[l][nu][k] * c(k, mu, rho) + ginv[nu][k] * dc(l, k, mu, rho);
                        }
                        dgamma[l][nu][mu][rho] = 0.5 * s;
                    }
                }
            }
        }
        let r = riemann_from(&gamma, &dgamma);
        let rm = frame_riemann(&g, &fr.e, &r);
        let det = crate::linalg::det(&g);
        Ok(CurvatureFast { n: m.n(), eps: fr.eps, rm, det })
    }

    pub fn smix(&self) -> f64 {
        let d = self.eps.len();
        let mut s = 0.0;
        for a in 0..self.n {
            for i in self.n..d {
                s += self.eps[a] * self.eps[i] * self.rm[a][i][a][i];
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::ProductStructure;

    #[test]
    fn fast_path_round_sphere() {
        let s = ProductStructure::load(
            "name = s2\ndim = 2\ndtilde_dim = 1\nmetric 0 0 = 1\nmetric 1 1 = sin(x0)^2\n\
             dtilde 0 = 1, 0\ndomain = [0.5, 2.5] x [0, 1]\n",
        )
        .unwrap();
        let c = CurvatureFast::new(&s, &[1.1, 0.3]).unwrap();
        assert!((sectional(&c.rm, &c.eps, 0, 1) - 1.0).abs() < 1e-12);
        assert!((c.smix() - 1.0).abs() < 1e-12);
        assert!(c.det > 0.0);
    }
}
