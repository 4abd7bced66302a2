//! Natural-transformation spaces between parallel connections and the loop
//! operator acting on them.
//!
//! For parallel connections `Λ_•, Ω_•` the space `NT(Λ_k, Ω_k)` is flattened
//! by listing blocks in (source simple, target simple) lexicographic order,
//! each block row-major. The loop operator
//! `S_k : NT(Λ_k, Ω_k) → NT(Λ_{k-1}, Ω_{k-1})` conjugates the Γ-whiskered
//! transformation by the two connections and closes the Δ-strand with the
//! tracial cup weights `ν^k_n / ν^{k-1}_{n'}`; its adjoint with respect to
//! the weighted trace inner products closes the Γ-strand the other way with
//! weights `μ^{k-1}_m / μ^k_p`. The coordinate conventions are pinned by
//! three independent anchors: `S` is unital, the adjoint identity holds, and
//! the vertex-model specialization reproduces the closed-form sum over
//! matrix entries of the defining unitary.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::connection::UnitaryConnection;
use crate::error::{Error, Result};
use crate::linalg::{c, eigvals_sorted, herm_min_eig, op_norm, CMat, CVec};
use crate::semisimple::{
    nt_inner, nt_vertical, whisker_left, whisker_right, NatTrans, PathBasis,
};

/// A validated pair of parallel connections (same towers).
#[derive(Debug, Clone)]
pub struct ParallelPair {
    lambda: UnitaryConnection,
    omega: UnitaryConnection,
}

impl ParallelPair {
    pub fn new(lambda: UnitaryConnection, omega: UnitaryConnection) -> Result<Self> {
        if !lambda.parallel_to(&omega) {
            return Err(Error::Structure(
                "connections are not parallel (towers differ)".into(),
            ));
        }
        Ok(Self { lambda, omega })
    }

    /// The endomorphism case Λ = Ω.
    pub fn endo(cell: UnitaryConnection) -> Self {
        Self {
            lambda: cell.clone(),
            omega: cell,
        }
    }

    pub fn lambda(&self) -> &UnitaryConnection {
        &self.lambda
    }

    pub fn omega(&self) -> &UnitaryConnection {
        &self.omega
    }

    pub fn is_endo(&self) -> bool {
        let (l, p) = (self.lambda.preperiod(), self.lambda.period());
        (0..=l + p).all(|k| self.lambda.lambda_adj(k) == self.omega.lambda_adj(k))
            && (1..=l + p).all(|k| {
                let a = self.lambda.w_nt(k).unwrap();
                let b = self.omega.w_nt(k).unwrap();
                (0..a.n_source()).all(|m| (0..a.n_target()).all(|n| a.block(m, n) == b.block(m, n)))
            })
    }

    pub fn preperiod(&self) -> usize {
        self.lambda.preperiod()
    }

    pub fn period(&self) -> usize {
        self.lambda.period()
    }

    pub fn nt_space(&self, k: usize) -> NtSpace {
        NtSpace::new(self, k)
    }
}

/// The flattened coordinate chart on `NT(Λ_k, Ω_k)`.
#[derive(Debug, Clone)]
pub struct NtSpace {
    pub level: usize,
    pub dom_adj: Array2<usize>,
    pub cod_adj: Array2<usize>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

impl NtSpace {
    fn new(pair: &ParallelPair, k: usize) -> Self {
        Self {
            level: k,
            dom_adj: pair.lambda.lambda_adj(k).clone(),
            cod_adj: pair.omega.lambda_adj(k).clone(),
            mu: pair.lambda.source().weights_at(k),
            nu: pair.lambda.target().weights_at(k),
        }
    }

    pub fn dim(&self) -> usize {
        let (nt, ns) = self.dom_adj.dim();
        (0..ns)
            .map(|v| {
                (0..nt)
                    .map(|w| self.dom_adj[(w, v)] * self.cod_adj[(w, v)])
                    .sum::<usize>()
            })
            .sum()
    }

    pub fn zero(&self) -> NatTrans {
        NatTrans::zero(&self.dom_adj, &self.cod_adj)
    }

    pub fn identity(&self) -> Result<NatTrans> {
        if self.dom_adj != self.cod_adj {
            return Err(Error::Structure(
                "identity needs equal domain and codomain functors".into(),
            ));
        }
        Ok(NatTrans::identity(&self.dom_adj))
    }

    pub fn random<R: Rng>(&self, rng: &mut R) -> NatTrans {
        NatTrans::random(&self.dom_adj, &self.cod_adj, rng)
    }

    pub fn flatten(&self, nt: &NatTrans) -> CVec {
        let mut out = CVec::zeros(self.dim());
        let mut idx = 0;
        for v in 0..self.dom_adj.ncols() {
            for w in 0..self.dom_adj.nrows() {
                for z in nt.block(v, w).iter() {
                    out[idx] = *z;
                    idx += 1;
                }
            }
        }
        out
    }

    pub fn unflatten(&self, vec: &CVec) -> NatTrans {
        let mut nt = self.zero();
        let mut idx = 0;
        for v in 0..self.dom_adj.ncols() {
            for w in 0..self.dom_adj.nrows() {
                for z in nt.block_mut(v, w).iter_mut() {
                    *z = vec[idx];
                    idx += 1;
                }
            }
        }
        nt
    }

    pub fn basis_element(&self, i: usize) -> NatTrans {
        let mut v = CVec::zeros(self.dim());
        v[i] = c(1.0);
        self.unflatten(&v)
    }

    /// Diagonal of the trace inner product in the flattened chart:
    /// the entry for a coordinate in block (v, w) is μ_v ν_w.
    pub fn weight_vector(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.dim());
        for v in 0..self.dom_adj.ncols() {
            for w in 0..self.dom_adj.nrows() {
                let n = self.dom_adj[(w, v)] * self.cod_adj[(w, v)];
                g.extend(std::iter::repeat(self.mu[v] * self.nu[w]).take(n));
            }
        }
        g
    }

    pub fn inner(&self, a: &NatTrans, b: &NatTrans) -> Result<C64> {
        nt_inner(a, b, &self.mu, &self.nu)
    }

    pub fn two_norm(&self, a: &NatTrans) -> f64 {
        crate::semisimple::nt_two_norm(a, &self.mu, &self.nu)
    }
}

/// One application of the loop operator: `η ∈ NT(Λ_k, Ω_k)` with `k ≥ 1`.
pub fn loop_apply(pair: &ParallelPair, k: usize, eta: &NatTrans) -> Result<NatTrans> {
    let gamma = pair.lambda.source().functor_adj(k);
    let delta = pair.lambda.target().functor_adj(k);
    let lam_prev = pair.lambda.lambda_adj(k - 1);
    let om_prev = pair.omega.lambda_adj(k - 1);
    let w_lam = pair.lambda.w_nt(k)?;
    let w_om = pair.omega.w_nt(k)?;
    let eta_g = whisker_right(eta, gamma)?;
    // ζ : Δ_kΛ_{k-1} → Δ_kΩ_{k-1}
    let zeta = nt_vertical(&w_om.star(), &nt_vertical(&eta_g, &w_lam)?)?;

    let nu_prev = pair.lambda.target().weights_at(k - 1);
    let nu_k = pair.lambda.target().weights_at(k);
    let dom_basis = PathBasis::new(lam_prev, delta)?;
    let cod_basis = PathBasis::new(om_prev, delta)?;

    let mut out = NatTrans::zero(lam_prev, om_prev);
    for m in 0..lam_prev.ncols() {
        for np in 0..lam_prev.nrows() {
            let rows = om_prev[(np, m)];
            let cols = lam_prev[(np, m)];
            if rows * cols == 0 {
                continue;
            }
            let mut blk = crate::linalg::czeros(rows, cols);
            for n in 0..delta.nrows() {
                let edges = delta[(n, np)];
                if edges == 0 {
                    continue;
                }
                let weight = c(nu_k[n] / nu_prev[np]);
                let z = zeta.block(m, n);
                for fp in 0..rows {
                    for f in 0..cols {
                        let mut s = C64::ZERO;
                        for e in 0..edges {
                            let r = cod_basis.index_of(m, n, np, fp, e);
                            let cc = dom_basis.index_of(m, n, np, f, e);
                            s += z[(r, cc)];
                        }
                        blk[(fp, f)] += weight * s;
                    }
                }
            }
            *out.block_mut(m, np) = blk;
        }
    }
    Ok(out)
}

/// One application of the adjoint loop operator:
/// `κ ∈ NT(Λ_{k-1}, Ω_{k-1})`, result in `NT(Λ_k, Ω_k)`.
pub fn loop_adjoint_apply(pair: &ParallelPair, k: usize, kappa: &NatTrans) -> Result<NatTrans> {
    let gamma = pair.lambda.source().functor_adj(k);
    let delta = pair.lambda.target().functor_adj(k);
    let lam_k = pair.lambda.lambda_adj(k);
    let om_k = pair.omega.lambda_adj(k);
    let w_lam = pair.lambda.w_nt(k)?;
    let w_om = pair.omega.w_nt(k)?;
    let dk = whisker_left(delta, kappa)?;
    // ξ : Λ_kΓ_k → Ω_kΓ_k
    let xi = nt_vertical(&w_om, &nt_vertical(&dk, &w_lam.star())?)?;

    let mu_prev = pair.lambda.source().weights_at(k - 1);
    let mu_k = pair.lambda.source().weights_at(k);
    let dom_basis = PathBasis::new(gamma, lam_k)?;
    let cod_basis = PathBasis::new(gamma, om_k)?;

    let mut out = NatTrans::zero(lam_k, om_k);
    for p in 0..lam_k.ncols() {
        for n in 0..lam_k.nrows() {
            let rows = om_k[(n, p)];
            let cols = lam_k[(n, p)];
            if rows * cols == 0 {
                continue;
            }
            let mut blk = crate::linalg::czeros(rows, cols);
            for m in 0..gamma.ncols() {
                let edges = gamma[(p, m)];
                if edges == 0 {
                    continue;
                }
                let weight = c(mu_prev[m] / mu_k[p]);
                let z = xi.block(m, n);
                for gp in 0..rows {
                    for g in 0..cols {
                        let mut s = C64::ZERO;
                        for e in 0..edges {
                            let r = cod_basis.index_of(m, n, p, e, gp);
                            let cc = dom_basis.index_of(m, n, p, e, g);
                            s += z[(r, cc)];
                        }
                        blk[(gp, g)] += weight * s;
                    }
                }
            }
            *out.block_mut(p, n) = blk;
        }
    }
    Ok(out)
}

/// The loop operator and its adjoint as explicit matrices on the flattened
/// charts.
#[derive(Debug, Clone)]
pub struct LoopOperator {
    pub level: usize,
    pub space_k: NtSpace,
    pub space_prev: NtSpace,
    /// shape dim(k-1) × dim(k)
    pub matrix: CMat,
    /// shape dim(k) × dim(k-1)
    pub adjoint_matrix: CMat,
}

impl LoopOperator {
    /// Worst violation of ⟨Sη, κ⟩_{k-1} = ⟨η, S*κ⟩_k over the coordinate
    /// basis pairs.
    pub fn adjoint_residual(&self) -> f64 {
        let g_prev = self.space_prev.weight_vector();
        let g_k = self.space_k.weight_vector();
        let mut worst = 0.0f64;
        for i in 0..self.space_k.dim() {
            for j in 0..self.space_prev.dim() {
                let lhs = c(g_prev[j]) * self.matrix[(j, i)];
                let rhs = c(g_k[i]) * self.adjoint_matrix[(i, j)].conj();
                worst = worst.max((lhs - rhs).norm());
            }
        }
        worst
    }
}

/// Assemble `S_k` and `S*_k` by evaluating the loop on every basis element.
pub fn loop_matrix(pair: &ParallelPair, k: usize) -> Result<LoopOperator> {
    let space_k = pair.nt_space(k);
    let space_prev = pair.nt_space(k - 1);
    let (dk, dp) = (space_k.dim(), space_prev.dim());
    let mut matrix = crate::linalg::czeros(dp, dk);
    for i in 0..dk {
        let e = space_k.basis_element(i);
        let img = loop_apply(pair, k, &e)?;
        let col = space_prev.flatten(&img);
        for j in 0..dp {
            matrix[(j, i)] = col[j];
        }
    }
    let mut adjoint_matrix = crate::linalg::czeros(dk, dp);
    for j in 0..dp {
        let e = space_prev.basis_element(j);
        let img = loop_adjoint_apply(pair, k, &e)?;
        let col = space_k.flatten(&img);
        for i in 0..dk {
            adjoint_matrix[(i, j)] = col[i];
        }
    }
    Ok(LoopOperator {
        level: k,
        space_k,
        space_prev,
        matrix,
        adjoint_matrix,
    })
}

/// Matrix of the one-period composite `S_{L+1} ⋯ S_{L+K}` on the reference
/// chart `NT(Λ_L, Ω_L)`.
pub fn period_composite_matrix(pair: &ParallelPair) -> Result<(CMat, NtSpace)> {
    let l = pair.preperiod();
    let p = pair.period();
    let mut acc: Option<CMat> = None;
    for k in l + 1..=l + p {
        let lm = loop_matrix(pair, k)?;
        acc = Some(match acc {
            None => lm.matrix,
            Some(a) => a.dot(&lm.matrix),
        });
    }
    let space = pair.nt_space(l);
    let m = acc.expect("period ≥ 1");
    if m.nrows() != space.dim() || m.ncols() != space.dim() {
        return Err(Error::Structure(
            "period composite is not square: tower seam mismatch".into(),
        ));
    }
    Ok((m, space))
}

/// Residual of the exchange relation for `(η_k, η_{k+1})`: compares
/// `W^Ω_{k+1} ∘ Δ_{k+1}(η_k)` against `(η_{k+1})_{Γ_{k+1}} ∘ W^Λ_{k+1}`.
pub fn exchange_check(
    pair: &ParallelPair,
    eta_k: &NatTrans,
    eta_k1: &NatTrans,
    k: usize,
) -> Result<f64> {
    let gamma = pair.lambda.source().functor_adj(k + 1);
    let delta = pair.lambda.target().functor_adj(k + 1);
    let lhs = nt_vertical(&pair.omega.w_nt(k + 1)?, &whisker_left(delta, eta_k)?)?;
    let rhs = nt_vertical(&whisker_right(eta_k1, gamma)?, &pair.lambda.w_nt(k + 1)?)?;
    Ok(lhs.sub(&rhs)?.max_abs())
}

/// `[Γ_k μ^{k-1}]_p / μ^k_p`: the clockwise loop scalar of the Γ-duality
/// commensurate with `(μ^{k-1}, μ^k)`, one value per level-k simple.
pub fn gamma_loop_scalars(pair: &ParallelPair, k: usize) -> Vec<C64> {
    let gamma = pair.lambda.source().functor_adj(k);
    let mu_prev = pair.lambda.source().weights_at(k - 1);
    let mu_k = pair.lambda.source().weights_at(k);
    (0..gamma.nrows())
        .map(|p| {
            let s: f64 = (0..gamma.ncols())
                .map(|m| gamma[(p, m)] as f64 * mu_prev[m])
                .sum();
            c(s / mu_k[p])
        })
        .collect()
}

/// Outcome of the exchange ↔ adjoint-loop criterion on one transformation.
#[derive(Debug, Clone)]
pub struct ExchangeViaLoop {
    /// ‖S*Sη − η ⊙ loop‖_max
    pub loop_residual: f64,
    /// exchange residual of the pair (S_kη, η)
    pub exchange_residual: f64,
    /// both residuals under the threshold, or both over it
    pub consistent: bool,
}

/// Evaluates both sides of the criterion: `(S_kη, η)` satisfies the exchange
/// relation iff `S*_k S_k η = η ⊙ loop` with the Γ-loop scalars. Returns raw
/// residuals along with agreement at the given threshold.
pub fn exchange_via_loop(
    pair: &ParallelPair,
    k: usize,
    eta: &NatTrans,
    threshold: f64,
) -> Result<ExchangeViaLoop> {
    let s_eta = loop_apply(pair, k, eta)?;
    let sts = loop_adjoint_apply(pair, k, &s_eta)?;
    let scalars = gamma_loop_scalars(pair, k);
    let target = eta.scale_by_source(&scalars);
    let loop_residual = sts.sub(&target)?.max_abs();
    let exchange_residual = exchange_check(pair, &s_eta, eta, k - 1)?;
    let consistent = (loop_residual < threshold) == (exchange_residual < threshold);
    Ok(ExchangeViaLoop {
        loop_residual,
        exchange_residual,
        consistent,
    })
}

/// Aggregate report of the unital-completely-positive property suite.
#[derive(Debug, Clone)]
pub struct UcpReport {
    pub unitality_residual: f64,
    pub star_residual: f64,
    /// most negative block eigenvalue of S(η*η) − (Sη)*(Sη) observed
    pub schwarz_defect: f64,
    /// max over trials of ‖Sη‖_C* − ‖η‖_C* (clamped below at 0)
    pub cstar_defect: f64,
    /// spectral radius of the one-period composite
    pub spectral_radius: f64,
    /// operator norm of the composite w.r.t. the reference trace inner product
    pub weighted_two_norm: f64,
    pub ok: bool,
}

/// Runs unitality, ∗-preservation, the Schwarz inequality, C*-contraction
/// and the composite spectral bounds on the endomorphism pair of `cell`.
pub fn ucp_suite<R: Rng>(
    cell: &UnitaryConnection,
    trials: usize,
    rng: &mut R,
    tol: f64,
) -> Result<UcpReport> {
    let pair = ParallelPair::endo(cell.clone());
    let (l, p) = (pair.preperiod(), pair.period());
    let mut unitality = 0.0f64;
    let mut star_res = 0.0f64;
    let mut schwarz = 0.0f64;
    let mut cstar = 0.0f64;
    for k in l + 1..=l + p {
        let space = pair.nt_space(k);
        let id_k = space.identity()?;
        let id_prev = pair.nt_space(k - 1).identity()?;
        unitality = unitality.max(loop_apply(&pair, k, &id_k)?.sub(&id_prev)?.max_abs());
        for _ in 0..trials {
            let eta = space.random(rng);
            let s_eta = loop_apply(&pair, k, &eta)?;
            let s_eta_star = loop_apply(&pair, k, &eta.star())?;
            star_res = star_res.max(s_eta_star.sub(&s_eta.star())?.max_abs());
            let s_ee = loop_apply(&pair, k, &nt_vertical(&eta.star(), &eta)?)?;
            let gap = s_ee.sub(&nt_vertical(&s_eta.star(), &s_eta)?)?;
            for v in 0..gap.n_source() {
                for w in 0..gap.n_target() {
                    schwarz = schwarz.min(herm_min_eig(gap.block(v, w)));
                }
            }
            cstar = cstar.max((s_eta.c_star_norm() - eta.c_star_norm()).max(0.0));
        }
    }
    let (composite, space) = period_composite_matrix(&pair)?;
    let spectral_radius = eigvals_sorted(&composite)?
        .first()
        .map(|z| z.norm())
        .unwrap_or(0.0);
    // conjugate by the diagonal weight to measure the norm in the trace
    // inner product
    let g = space.weight_vector();
    let mut conj = composite.clone();
    for i in 0..conj.nrows() {
        for j in 0..conj.ncols() {
            conj[(i, j)] *= c((g[i] / g[j]).sqrt());
        }
    }
    let weighted_two_norm = op_norm(&conj);
    let ok = unitality < 1e-10
        && star_res < 1e-12
        && schwarz > -1e-9
        && cstar < 1e-9
        && spectral_radius <= 1.0 + 1e-9
        && weighted_two_norm <= 1.0 + tol.max(1e-9);
    Ok(UcpReport {
        unitality_residual: unitality,
        star_residual: star_res,
        schwarz_defect: schwarz,
        cstar_defect: cstar,
        spectral_radius,
        weighted_two_norm,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bratteli::TracialBratteli;
    use crate::connection::{build_graph_identity, build_vertex_model, gen};
    use crate::linalg::{ceye, haar_unitary, max_abs_diff};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn vertex_pair(u: &CMat, x: usize, y: usize) -> ParallelPair {
        ParallelPair::endo(build_vertex_model(u, x, y).unwrap())
    }

    #[test]
    fn nt_space_dimensions() {
        // vertex model: D = |Y|²
        let pair = vertex_pair(&ceye(6), 2, 3);
        assert_eq!(pair.nt_space(1).dim(), 9);
        // graph identity on the all-ones graph: D = Σ adjacency² entries
        let tower = TracialBratteli::constant(&array![[1, 1], [1, 1]]).unwrap();
        let pair = ParallelPair::endo(build_graph_identity(&tower).unwrap());
        assert_eq!(pair.nt_space(1).dim(), 4);
    }

    #[test]
    fn vertex_identity_loop_is_identity() {
        let pair = vertex_pair(&ceye(4), 2, 2);
        let lm = loop_matrix(&pair, 1).unwrap();
        assert!(max_abs_diff(&lm.matrix, &ceye(4)) < 1e-14);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let eta = pair.nt_space(1).random(&mut rng);
        let s_eta = loop_apply(&pair, 1, &eta).unwrap();
        assert!(s_eta.sub(&eta).unwrap().max_abs() < 1e-13);
    }

    /// Closed-form vertex-model matrices built straight from the unitary's
    /// entries, used as the coordinate anchor.
    fn vertex_closed_form(u: &CMat, x: usize, y: usize) -> (CMat, CMat) {
        let d = y * y;
        let mut s = crate::linalg::czeros(d, d);
        let mut s_star = crate::linalg::czeros(d, d);
        let idx = |a: usize, b: usize| a * y + b;
        let uu = |x2: usize, y2: usize, x1: usize, y1: usize| u[(x2 * y + y2, x1 * y + y1)];
        for yy in 0..y {
            for yp in 0..y {
                for y2 in 0..y {
                    for y1 in 0..y {
                        let mut acc = C64::ZERO;
                        let mut acc_star = C64::ZERO;
                        for x1 in 0..x {
                            for x2 in 0..x {
                                acc += uu(x2, y2, x1, yy).conj() * uu(x2, y1, x1, yp);
                                acc_star += uu(x1, yy, x2, y2) * uu(x1, yp, x2, y1).conj();
                            }
                        }
                        s[(idx(yy, yp), idx(y2, y1))] = acc / c(x as f64);
                        s_star[(idx(yy, yp), idx(y2, y1))] = acc_star / c(x as f64);
                    }
                }
            }
        }
        (s, s_star)
    }

    #[test]
    fn vertex_loop_matches_closed_form() {
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        for (x, y) in [(1, 2), (2, 2), (3, 2), (2, 3), (3, 3), (1, 1)] {
            let u = haar_unitary(x * y, &mut rng);
            let pair = vertex_pair(&u, x, y);
            let lm = loop_matrix(&pair, 1).unwrap();
            let (s, s_star) = vertex_closed_form(&u, x, y);
            assert!(
                max_abs_diff(&lm.matrix, &s) < 1e-12,
                "S mismatch at x={x} y={y}"
            );
            // the weighted adjoint is d² = |X|² times the state-normalized
            // closed form
            let scaled = s_star.mapv(|z| z * c((x * x) as f64));
            assert!(
                max_abs_diff(&lm.adjoint_matrix, &scaled) < 1e-11,
                "S* mismatch at x={x} y={y}"
            );
        }
    }

    #[test]
    fn single_x_reduces_to_conjugation() {
        // |X| = 1: S η = U* η U for the |Y|×|Y| block of U
        let mut rng = ChaCha20Rng::seed_from_u64(55);
        let u = haar_unitary(3, &mut rng);
        let pair = vertex_pair(&u, 1, 3);
        let eta = pair.nt_space(1).random(&mut rng);
        let s_eta = loop_apply(&pair, 1, &eta).unwrap();
        let expect = crate::linalg::dagger(&u)
            .dot(eta.block(0, 0))
            .dot(&u);
        assert!(max_abs_diff(s_eta.block(0, 0), &expect) < 1e-12);
    }

    #[test]
    fn unitality_on_random_instances() {
        for seed in 0..6u64 {
            let inst = gen::random_instance(seed).unwrap();
            let pair = ParallelPair::endo(inst.lambda_cell);
            let (l, p) = (pair.preperiod(), pair.period());
            for k in l + 1..=l + p {
                let id_k = pair.nt_space(k).identity().unwrap();
                let id_prev = pair.nt_space(k - 1).identity().unwrap();
                let r = loop_apply(&pair, k, &id_k)
                    .unwrap()
                    .sub(&id_prev)
                    .unwrap()
                    .max_abs();
                assert!(r < 1e-10, "seed {seed} level {k}: unitality {r}");
            }
        }
    }

    #[test]
    fn adjoint_identity_on_random_instances() {
        for seed in 0..6u64 {
            let inst = gen::random_instance(seed).unwrap();
            let pair = ParallelPair::new(inst.lambda_cell, inst.omega_cell).unwrap();
            let (l, p) = (pair.preperiod(), pair.period());
            for k in l + 1..=l + p {
                let lm = loop_matrix(&pair, k).unwrap();
                let r = lm.adjoint_residual();
                assert!(r < 1e-10, "seed {seed} level {k}: adjoint residual {r}");
            }
        }
    }

    #[test]
    fn sstar_s_identity_gives_loop_scalars() {
        for seed in [0u64, 1, 3] {
            let inst = gen::random_instance(seed).unwrap();
            let pair = ParallelPair::endo(inst.lambda_cell);
            let k = pair.preperiod() + 1;
            let id_k = pair.nt_space(k).identity().unwrap();
            let sts = loop_adjoint_apply(&pair, k, &loop_apply(&pair, k, &id_k).unwrap()).unwrap();
            let target = id_k.scale_by_source(&gamma_loop_scalars(&pair, k));
            assert!(sts.sub(&target).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn vertex_loop_scalar_is_x_squared() {
        let pair = vertex_pair(&ceye(4), 2, 2);
        let scalars = gamma_loop_scalars(&pair, 1);
        assert!((scalars[0] - c(4.0)).norm() < 1e-12);
    }

    #[test]
    fn exchange_identity_cell() {
        let tower = TracialBratteli::constant(&array![[0, 1, 1], [1, 0, 1], [1, 1, 0]]).unwrap();
        let pair = ParallelPair::endo(build_graph_identity(&tower).unwrap());
        let id1 = pair.nt_space(0).identity().unwrap();
        let id2 = pair.nt_space(1).identity().unwrap();
        let r = exchange_check(&pair, &id1, &id2, 0).unwrap();
        assert!(r < 1e-14);
    }

    #[test]
    fn exchange_negative_control() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let inst = gen::random_instance(2).unwrap();
        let pair = ParallelPair::new(inst.lambda_cell, inst.omega_cell).unwrap();
        let k = pair.preperiod() + 1;
        let eta_prev = pair.nt_space(k - 1).random(&mut rng);
        let eta_k = pair.nt_space(k).random(&mut rng);
        let r = exchange_check(&pair, &eta_prev, &eta_k, k - 1).unwrap();
        assert!(r > 1e-3, "unrelated transformations should not match: {r}");
    }

    #[test]
    fn exchange_biconditional_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(4096);
        for seed in 0..5u64 {
            let inst = gen::random_instance(seed).unwrap();
            let pair = ParallelPair::new(inst.lambda_cell, inst.omega_cell).unwrap();
            let k = pair.preperiod() + 1;
            let space = pair.nt_space(k);
            for _ in 0..40 {
                let eta = space.random(&mut rng);
                let out = exchange_via_loop(&pair, k, &eta, 1e-8).unwrap();
                assert!(
                    out.consistent,
                    "seed {seed}: loop residual {} vs exchange residual {}",
                    out.loop_residual, out.exchange_residual
                );
            }
            // the identity on an endo pair always satisfies both sides
            let endo = ParallelPair::endo(pair.lambda().clone());
            let id_k = endo.nt_space(k).identity().unwrap();
            let out = exchange_via_loop(&endo, k, &id_k, 1e-8).unwrap();
            assert!(out.loop_residual < 1e-9 && out.exchange_residual < 1e-9);
        }
    }

    #[test]
    fn ucp_suite_on_families() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let u = haar_unitary(6, &mut rng);
        let cell = build_vertex_model(&u, 2, 3).unwrap();
        let rep = ucp_suite(&cell, 10, &mut rng, 1e-9).unwrap();
        assert!(rep.ok, "{rep:?}");

        let inst = gen::random_instance(9).unwrap();
        let rep = ucp_suite(&inst.lambda_cell, 10, &mut rng, 1e-9).unwrap();
        assert!(rep.ok, "{rep:?}");
    }

    #[test]
    fn ucp_suite_detects_corruption() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let tower = TracialBratteli::constant(&array![[1, 1], [1, 1]]).unwrap();
        let cell = build_graph_identity(&tower).unwrap();
        let mut bad = cell.clone();
        // scale a block: no longer unitary, suite must notice
        bad_block_scale(&mut bad);
        let rep = ucp_suite(&bad, 10, &mut rng, 1e-9).unwrap();
        assert!(!rep.ok, "corrupted connection passed: {rep:?}");
    }

    // UnitaryConnection has no mutators; rebuild with a non-unitary block.
    fn bad_block_scale(cell: &mut UnitaryConnection) {
        let tower = cell.source().clone();
        let gamma = tower.functor_adj(1).clone();
        let sq = crate::linalg::mat_mul_usize(&gamma, &gamma);
        let n = gamma.nrows();
        let blocks: Vec<Vec<CMat>> = (0..n)
            .map(|m| {
                (0..n)
                    .map(|w| {
                        let mut b = CMat::eye(sq[(w, m)]);
                        if b.nrows() > 0 {
                            b[(0, 0)] = c(1.3);
                        }
                        b
                    })
                    .collect()
            })
            .collect();
        *cell = UnitaryConnection::new(
            tower.clone(),
            tower,
            vec![gamma.clone(), gamma],
            vec![blocks],
        )
        .unwrap();
    }

    #[test]
    fn spectral_radius_bounded_on_random() {
        for seed in 0..6u64 {
            let inst = gen::random_instance(seed).unwrap();
            let pair = ParallelPair::new(inst.lambda_cell, inst.omega_cell).unwrap();
            let (m, _) = period_composite_matrix(&pair).unwrap();
            let r = eigvals_sorted(&m).unwrap()[0].norm();
            assert!(r <= 1.0 + 1e-9, "seed {seed}: spectral radius {r}");
        }
    }
}
