//! Weighted semisimple categories, graph functors, and the block algebra of
//! natural transformations.
//!
//! A finite semisimple C*-category is presented by its list of simple labels
//! together with a strictly positive weight per simple; a ∗-linear bi-faithful
//! functor between two such categories is presented by its adjacency matrix
//! (entry `(w, v)` = dim hom(w, Fv) = number of edges between target simple
//! `w` and source simple `v`). A natural transformation `η: F → G` between
//! parallel functors is a family of complex blocks, one per pair
//! (source simple `v`, target simple `w`), of shape
//! `cod[(w,v)] × dom[(w,v)]`.
//!
//! Conventions fixed once and for all:
//! - hom spaces carry the standard edge basis `0..N-1`;
//! - the path basis of a composite `G∘F` at `(v, x)` enumerates triples
//!   `(u, e_F, e_G)` lexicographically — intermediate simple slowest, inner
//!   (first-applied) edge next, outer edge fastest;
//! - `NatTrans` blocks are indexed `[v][w]`, source simple first.
//!
//! All public quantities (traces, loop values, residuals) are independent of
//! these basis choices.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{c, czeros, dagger, kron, mat_mul_usize, max_abs, op_norm, CMat};

/// A finite list of simple-object labels with a strictly positive weight per
/// label.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCategory {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl WeightedCategory {
    pub fn new(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if labels.len() != weights.len() {
            return Err(Error::Structure(format!(
                "{} labels vs {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Structure("category with no simples".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(Error::Structure(format!("duplicate simple label '{l}'")));
            }
        }
        for (l, &w) in labels.iter().zip(&weights) {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "weight of simple '{l}' must be strictly positive, got {w}"
                )));
            }
        }
        Ok(Self { labels, weights })
    }

    /// Unlabelled category with simples `s0..s{n-1}`.
    pub fn anonymous(weights: Vec<f64>) -> Result<Self> {
        let labels = (0..weights.len()).map(|i| format!("s{i}")).collect();
        Self::new(labels, weights)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, v: usize) -> f64 {
        self.weights[v]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same simples, weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            labels: self.labels.clone(),
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }

    pub fn same_labels(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

/// A bi-faithful ∗-linear functor presented by its bipartite adjacency
/// matrix, shape `(target simples) × (source simples)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFunctor {
    source: WeightedCategory,
    target: WeightedCategory,
    adjacency: Array2<usize>,
}

impl GraphFunctor {
    pub fn new(
        source: WeightedCategory,
        target: WeightedCategory,
        adjacency: Array2<usize>,
    ) -> Result<Self> {
        if adjacency.nrows() != target.len() || adjacency.ncols() != source.len() {
            return Err(Error::Structure(format!(
                "adjacency shape {}x{} does not match |target|={} |source|={}",
                adjacency.nrows(),
                adjacency.ncols(),
                target.len(),
                source.len()
            )));
        }
        check_bifaithful(&adjacency)?;
        Ok(Self {
            source,
            target,
            adjacency,
        })
    }

    pub fn source(&self) -> &WeightedCategory {
        &self.source
    }

    pub fn target(&self) -> &WeightedCategory {
        &self.target
    }

    pub fn adjacency(&self) -> &Array2<usize> {
        &self.adjacency
    }

    /// Number of edges between target simple `w` and source simple `v`.
    pub fn edges(&self, w: usize, v: usize) -> usize {
        self.adjacency[(w, v)]
    }

    /// The adjoint functor: transposed adjacency, source and target swapped.
    pub fn adjoint(&self) -> GraphFunctor {
        GraphFunctor {
            source: self.target.clone(),
            target: self.source.clone(),
            adjacency: self.adjacency.t().to_owned(),
        }
    }
}

/// Every vertex must touch an edge on both sides.
pub fn check_bifaithful(adjacency: &Array2<usize>) -> Result<()> {
    for w in 0..adjacency.nrows() {
        if (0..adjacency.ncols()).all(|v| adjacency[(w, v)] == 0) {
            return Err(Error::Validation(format!(
                "target simple {w} is isolated (zero adjacency row)"
            )));
        }
    }
    for v in 0..adjacency.ncols() {
        if (0..adjacency.nrows()).all(|w| adjacency[(w, v)] == 0) {
            return Err(Error::Validation(format!(
                "source simple {v} is isolated (zero adjacency column)"
            )));
        }
    }
    Ok(())
}

/// Ordered path enumeration for a binary composite `second ∘ first`.
///
/// For each (source simple `v`, target simple `x`) the paths are the triples
/// `(u, e_first, e_second)` in lexicographic order. When `first` or `second`
/// is itself a composite, its edge index is understood as the index into its
/// own flattened path basis.
#[derive(Debug, Clone)]
pub struct PathBasis {
    first: Array2<usize>,
    second: Array2<usize>,
    paths: Vec<Vec<Vec<(usize, usize, usize)>>>,
}

impl PathBasis {
    pub fn new(first: &Array2<usize>, second: &Array2<usize>) -> Result<Self> {
        if first.nrows() != second.ncols() {
            return Err(Error::Structure(format!(
                "path basis: middle mismatch {} vs {}",
                first.nrows(),
                second.ncols()
            )));
        }
        let n_source = first.ncols();
        let n_mid = first.nrows();
        let n_target = second.nrows();
        let mut paths = vec![vec![Vec::new(); n_target]; n_source];
        for (v, row) in paths.iter_mut().enumerate() {
            for (x, cell) in row.iter_mut().enumerate() {
                for u in 0..n_mid {
                    for e1 in 0..first[(u, v)] {
                        for e2 in 0..second[(x, u)] {
                            cell.push((u, e1, e2));
                        }
                    }
                }
            }
        }
        Ok(Self {
            first: first.clone(),
            second: second.clone(),
            paths,
        })
    }

    pub fn count(&self, v: usize, x: usize) -> usize {
        self.paths[v][x].len()
    }

    pub fn paths(&self, v: usize, x: usize) -> &[(usize, usize, usize)] {
        &self.paths[v][x]
    }

    pub fn index_of(&self, v: usize, x: usize, u: usize, e1: usize, e2: usize) -> usize {
        let mut idx = 0usize;
        for m in 0..u {
            idx += self.first[(m, v)] * self.second[(x, m)];
        }
        idx + e1 * self.second[(x, u)] + e2
    }

    pub fn composite_adjacency(&self) -> Array2<usize> {
        mat_mul_usize(&self.second, &self.first)
    }
}

/// Composite `second ∘ first` with its path basis. Fails unless
/// `first.target == second.source`.
pub fn compose_functors(
    first: &GraphFunctor,
    second: &GraphFunctor,
) -> Result<(GraphFunctor, PathBasis)> {
    if !first.target.same_labels(&second.source)
        || first.target.weights() != second.source.weights()
    {
        return Err(Error::Structure(
            "compose_functors: target of first != source of second".into(),
        ));
    }
    let basis = PathBasis::new(first.adjacency(), second.adjacency())?;
    let adj = basis.composite_adjacency();
    let f = GraphFunctor::new(first.source.clone(), second.target.clone(), adj)?;
    Ok((f, basis))
}

/// The adjoint (transpose) functor.
pub fn adjoint_functor(f: &GraphFunctor) -> GraphFunctor {
    f.adjoint()
}

/// A natural transformation between parallel functors, as a block matrix
/// family. Only the two adjacency matrices are retained; shape checks happen
/// at the operation sites.
#[derive(Debug, Clone, PartialEq)]
pub struct NatTrans {
    dom: Array2<usize>,
    cod: Array2<usize>,
    /// blocks[v][w], shape cod[(w,v)] × dom[(w,v)]
    blocks: Vec<Vec<CMat>>,
}

impl NatTrans {
    pub fn new(dom: Array2<usize>, cod: Array2<usize>, blocks: Vec<Vec<CMat>>) -> Result<Self> {
        if dom.dim() != cod.dim() {
            return Err(Error::Structure(
                "NatTrans: domain and codomain adjacency shapes differ".into(),
            ));
        }
        let (nt, ns) = dom.dim();
        if blocks.len() != ns || blocks.iter().any(|r| r.len() != nt) {
            return Err(Error::Structure("NatTrans: block table shape".into()));
        }
        for v in 0..ns {
            for w in 0..nt {
                let b = &blocks[v][w];
                if b.nrows() != cod[(w, v)] || b.ncols() != dom[(w, v)] {
                    return Err(Error::Structure(format!(
                        "NatTrans block ({v},{w}) is {}x{}, expected {}x{}",
                        b.nrows(),
                        b.ncols(),
                        cod[(w, v)],
                        dom[(w, v)]
                    )));
                }
            }
        }
        Ok(Self { dom, cod, blocks })
    }

    pub fn zero(dom: &Array2<usize>, cod: &Array2<usize>) -> Self {
        let (nt, ns) = dom.dim();
        let blocks = (0..ns)
            .map(|v| {
                (0..nt)
                    .map(|w| czeros(cod[(w, v)], dom[(w, v)]))
                    .collect()
            })
            .collect();
        Self {
            dom: dom.clone(),
            cod: cod.clone(),
            blocks,
        }
    }

    pub fn identity(adj: &Array2<usize>) -> Self {
        let (nt, ns) = adj.dim();
        let blocks = (0..ns)
            .map(|v| (0..nt).map(|w| CMat::eye(adj[(w, v)])).collect())
            .collect();
        Self {
            dom: adj.clone(),
            cod: adj.clone(),
            blocks,
        }
    }

    /// Gaussian random blocks, deterministic under a seeded generator.
    pub fn random<R: Rng>(dom: &Array2<usize>, cod: &Array2<usize>, rng: &mut R) -> Self {
        let mut nt = Self::zero(dom, cod);
        for row in nt.blocks.iter_mut() {
            for b in row.iter_mut() {
                for z in b.iter_mut() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *z = C64::new(re, im);
                }
            }
        }
        nt
    }

    pub fn dom(&self) -> &Array2<usize> {
        &self.dom
    }

    pub fn cod(&self) -> &Array2<usize> {
        &self.cod
    }

    pub fn n_source(&self) -> usize {
        self.dom.ncols()
    }

    pub fn n_target(&self) -> usize {
        self.dom.nrows()
    }

    pub fn block(&self, v: usize, w: usize) -> &CMat {
        &self.blocks[v][w]
    }

    pub fn block_mut(&mut self, v: usize, w: usize) -> &mut CMat {
        &mut self.blocks[v][w]
    }

    pub fn is_endo(&self) -> bool {
        self.dom == self.cod
    }

    /// Blockwise conjugate transpose; swaps domain and codomain.
    pub fn star(&self) -> NatTrans {
        let blocks = self
            .blocks
            .iter()
            .map(|row| row.iter().map(dagger).collect())
            .collect();
        NatTrans {
            dom: self.cod.clone(),
            cod: self.dom.clone(),
            blocks,
        }
    }

    pub fn scale(&self, z: C64) -> NatTrans {
        let blocks = self
            .blocks
            .iter()
            .map(|row| row.iter().map(|b| b.mapv(|x| x * z)).collect())
            .collect();
        NatTrans {
            dom: self.dom.clone(),
            cod: self.cod.clone(),
            blocks,
        }
    }

    pub fn add(&self, other: &NatTrans) -> Result<NatTrans> {
        if self.dom != other.dom || self.cod != other.cod {
            return Err(Error::Structure("NatTrans add: shape mismatch".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| a + b).collect())
            .collect();
        Ok(NatTrans {
            dom: self.dom.clone(),
            cod: self.cod.clone(),
            blocks,
        })
    }

    pub fn sub(&self, other: &NatTrans) -> Result<NatTrans> {
        self.add(&other.scale(c(-1.0)))
    }

    /// Largest entry modulus over all blocks.
    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|row| row.iter().map(max_abs))
            .fold(0.0, f64::max)
    }

    /// C*-norm: the largest block operator norm.
    pub fn c_star_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|row| row.iter().map(op_norm))
            .fold(0.0, f64::max)
    }

    /// Multiply the block at source simple `v` by `xi[v]` — tensoring on the
    /// source side with an element of End(id).
    pub fn scale_by_source(&self, xi: &[C64]) -> NatTrans {
        let mut out = self.clone();
        for (v, row) in out.blocks.iter_mut().enumerate() {
            for b in row.iter_mut() {
                b.mapv_inplace(|z| z * xi[v]);
            }
        }
        out
    }

    /// Same on the target side.
    pub fn scale_by_target(&self, xi: &[C64]) -> NatTrans {
        let mut out = self.clone();
        for row in out.blocks.iter_mut() {
            for (w, b) in row.iter_mut().enumerate() {
                b.mapv_inplace(|z| z * xi[w]);
            }
        }
        out
    }
}

/// Vertical composition `upper ∘ lower` (apply `lower` first).
pub fn nt_vertical(upper: &NatTrans, lower: &NatTrans) -> Result<NatTrans> {
    if lower.cod != upper.dom {
        return Err(Error::Structure(
            "nt_vertical: codomain of lower != domain of upper".into(),
        ));
    }
    let (nt, ns) = lower.dom.dim();
    let blocks = (0..ns)
        .map(|v| {
            (0..nt)
                .map(|w| upper.block(v, w).dot(lower.block(v, w)))
                .collect()
        })
        .collect();
    NatTrans::new(lower.dom.clone(), upper.cod.clone(), blocks)
}

/// Adjoint of a natural transformation.
pub fn nt_star(eta: &NatTrans) -> NatTrans {
    eta.star()
}

/// Left whiskering `F(η)` for `η: G → H` (functors C → D) and `F: D → E`:
/// a natural transformation `F∘G → F∘H` on the binary path bases.
pub fn whisker_left(f: &Array2<usize>, eta: &NatTrans) -> Result<NatTrans> {
    let n_mid = eta.dom.nrows();
    if f.ncols() != n_mid {
        return Err(Error::Structure(
            "whisker_left: functor source does not match η target".into(),
        ));
    }
    let dom = mat_mul_usize(f, &eta.dom);
    let cod = mat_mul_usize(f, &eta.cod);
    let ns = eta.dom.ncols();
    let nt = f.nrows();
    let mut out = NatTrans::zero(&dom, &cod);
    for v in 0..ns {
        for x in 0..nt {
            let mut ro = 0usize;
            let mut co = 0usize;
            for u in 0..n_mid {
                let b = eta.block(v, u);
                let m = f[(x, u)];
                if m == 0 {
                    continue;
                }
                let piece = kron(b, &CMat::eye(m));
                let (pr, pc) = piece.dim();
                out.blocks[v][x]
                    .slice_mut(ndarray::s![ro..ro + pr, co..co + pc])
                    .assign(&piece);
                ro += pr;
                co += pc;
            }
        }
    }
    Ok(out)
}

/// Right whiskering `η_F` for `η: G → H` (functors D → E) and `F: C → D`:
/// a natural transformation `G∘F → H∘F` on the binary path bases.
pub fn whisker_right(eta: &NatTrans, f: &Array2<usize>) -> Result<NatTrans> {
    let n_mid = f.nrows();
    if eta.dom.ncols() != n_mid {
        return Err(Error::Structure(
            "whisker_right: η source does not match functor target".into(),
        ));
    }
    let dom = mat_mul_usize(&eta.dom, f);
    let cod = mat_mul_usize(&eta.cod, f);
    let ns = f.ncols();
    let nt = eta.dom.nrows();
    let mut out = NatTrans::zero(&dom, &cod);
    for v in 0..ns {
        for x in 0..nt {
            let mut ro = 0usize;
            let mut co = 0usize;
            for u in 0..n_mid {
                let m = f[(u, v)];
                if m == 0 {
                    continue;
                }
                let b = eta.block(u, x);
                let piece = kron(&CMat::eye(m), b);
                let (pr, pc) = piece.dim();
                out.blocks[v][x]
                    .slice_mut(ndarray::s![ro..ro + pr, co..co + pc])
                    .assign(&piece);
                ro += pr;
                co += pc;
            }
        }
    }
    Ok(out)
}

/// Horizontal composite (tensor) `κ ⊙ η` of `η: F₁ → G₁` (C → D) and
/// `κ: F₂ → G₂` (D → E), realized as whisker-then-compose:
/// `κ_{G₁} ∘ F₂(η) : F₂∘F₁ → G₂∘G₁`.
pub fn nt_tensor(kappa: &NatTrans, eta: &NatTrans) -> Result<NatTrans> {
    let a = whisker_left(kappa.dom(), eta)?;
    let b = whisker_right(kappa, eta.cod())?;
    nt_vertical(&b, &a)
}

/// Trace of a block-diagonal endomorphism of an object with multiplicity
/// vector `mults`, weighted by the category weights.
pub fn categorical_trace(mults: &[usize], blocks: &[CMat], cat: &WeightedCategory) -> Result<C64> {
    if mults.len() != cat.len() || blocks.len() != cat.len() {
        return Err(Error::Structure(
            "categorical_trace: block count does not match category".into(),
        ));
    }
    let mut tr = C64::ZERO;
    for (v, b) in blocks.iter().enumerate() {
        if b.nrows() != mults[v] || b.ncols() != mults[v] {
            return Err(Error::Structure(format!(
                "categorical_trace: block {v} is {}x{}, multiplicity {}",
                b.nrows(),
                b.ncols(),
                mults[v]
            )));
        }
        tr += c(cat.weight(v)) * b.diag().sum();
    }
    Ok(tr)
}

/// Trace on End(Λ) commensurate with source weights `mu` and target weights
/// `nu`: Σ_v μ_v Σ_w ν_w tr(block(v,w)).
pub fn nt_trace(eta: &NatTrans, mu: &[f64], nu: &[f64]) -> Result<C64> {
    if !eta.is_endo() {
        return Err(Error::Structure("nt_trace needs an endomorphism".into()));
    }
    if mu.len() != eta.n_source() || nu.len() != eta.n_target() {
        return Err(Error::Structure("nt_trace: weight length mismatch".into()));
    }
    let mut tr = C64::ZERO;
    for v in 0..eta.n_source() {
        for w in 0..eta.n_target() {
            tr += c(mu[v] * nu[w]) * eta.block(v, w).diag().sum();
        }
    }
    Ok(tr)
}

/// Inner product ⟨η, κ⟩ = Tr(κ*η) with the weighted block trace; linear in
/// the first argument.
pub fn nt_inner(eta: &NatTrans, kappa: &NatTrans, mu: &[f64], nu: &[f64]) -> Result<C64> {
    if eta.dom != kappa.dom || eta.cod != kappa.cod {
        return Err(Error::Structure("nt_inner: shape mismatch".into()));
    }
    let mut acc = C64::ZERO;
    for v in 0..eta.n_source() {
        for w in 0..eta.n_target() {
            let k = kappa.block(v, w);
            let e = eta.block(v, w);
            let mut tr = C64::ZERO;
            for i in 0..e.nrows() {
                for j in 0..e.ncols() {
                    tr += k[(i, j)].conj() * e[(i, j)];
                }
            }
            acc += c(mu[v] * nu[w]) * tr;
        }
    }
    Ok(acc)
}

/// Weighted 2-norm induced by [`nt_inner`].
pub fn nt_two_norm(eta: &NatTrans, mu: &[f64], nu: &[f64]) -> f64 {
    nt_inner(eta, eta, mu, nu).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0)
}

/// Tracial solution data for the duality of a functor: the edge weight
/// κ_{w,v} = ν_w / μ_v, constant on parallel edges.
#[derive(Debug, Clone)]
pub struct DualitySolution {
    adjacency: Array2<usize>,
    kappa: Array2<f64>,
}

impl DualitySolution {
    /// The solution commensurate with the functor's stored weights.
    pub fn tracial(f: &GraphFunctor) -> Self {
        Self::with_weights(f.adjacency(), f.source().weights(), f.target().weights())
    }

    pub fn with_weights(adjacency: &Array2<usize>, mu: &[f64], nu: &[f64]) -> Self {
        let (nt, ns) = adjacency.dim();
        assert_eq!(nt, nu.len());
        assert_eq!(ns, mu.len());
        let mut kappa = Array2::<f64>::zeros((nt, ns));
        for w in 0..nt {
            for v in 0..ns {
                kappa[(w, v)] = nu[w] / mu[v];
            }
        }
        Self {
            adjacency: adjacency.clone(),
            kappa,
        }
    }

    pub fn kappa(&self) -> &Array2<f64> {
        &self.kappa
    }

    pub fn adjacency(&self) -> &Array2<usize> {
        &self.adjacency
    }

    /// ρ′ : id_C → F′F. The component at source simple `v` is the column
    /// Σ_{w,e} κ_{w,v}^{1/2} |e,e⟩ over paths (v →e w →e v).
    pub fn cup_prime(&self) -> NatTrans {
        let (nt, ns) = self.adjacency.dim();
        let dom = Array2::<usize>::eye(ns);
        let cod = mat_mul_usize(&self.adjacency.t().to_owned(), &self.adjacency);
        let mut out = NatTrans::zero(&dom, &cod);
        for v in 0..ns {
            let mut col = czeros(cod[(v, v)], 1);
            let mut idx = 0usize;
            for w in 0..nt {
                let n = self.adjacency[(w, v)];
                for e1 in 0..n {
                    for e2 in 0..n {
                        if e1 == e2 {
                            col[(idx, 0)] = c(self.kappa[(w, v)].sqrt());
                        }
                        idx += 1;
                    }
                }
            }
            out.blocks[v][v] = col;
        }
        out
    }

    /// ρ : id_D → FF′, with edge weights κ_{w,v}^{-1/2}.
    pub fn cup(&self) -> NatTrans {
        let (nt, ns) = self.adjacency.dim();
        let dom = Array2::<usize>::eye(nt);
        let cod = mat_mul_usize(&self.adjacency, &self.adjacency.t().to_owned());
        let mut out = NatTrans::zero(&dom, &cod);
        for w in 0..nt {
            let mut col = czeros(cod[(w, w)], 1);
            let mut idx = 0usize;
            for v in 0..ns {
                let n = self.adjacency[(w, v)];
                for e1 in 0..n {
                    for e2 in 0..n {
                        if e1 == e2 {
                            col[(idx, 0)] = c(1.0 / self.kappa[(w, v)].sqrt());
                        }
                        idx += 1;
                    }
                }
            }
            out.blocks[w][w] = col;
        }
        out
    }

    pub fn cap_prime(&self) -> NatTrans {
        self.cup_prime().star()
    }

    pub fn cap(&self) -> NatTrans {
        self.cup().star()
    }

    /// Value of ρ′* ∘ ρ′ at source simple `v`: Σ_w N_{w,v} κ_{w,v}.
    pub fn anticlockwise_loop(&self, v: usize) -> f64 {
        (0..self.adjacency.nrows())
            .map(|w| self.adjacency[(w, v)] as f64 * self.kappa[(w, v)])
            .sum()
    }

    /// Value of ρ* ∘ ρ at target simple `w`: Σ_v N_{w,v} / κ_{w,v}.
    pub fn clockwise_loop(&self, w: usize) -> f64 {
        (0..self.adjacency.ncols())
            .map(|v| self.adjacency[(w, v)] as f64 / self.kappa[(w, v)])
            .sum()
    }
}

/// Per-block permutation aligning the two bracketings of a triple composite
/// `h ∘ g ∘ f`.
///
/// A path from `v` to `x` is a tuple `(u, e_f, t, e_g, e_h)`. Its index in
/// the `(h∘g)∘f` basis is over `(u, e_f, j)` with `j` the `(t, e_g, e_h)`
/// path index of `h∘g`; in the `h∘(g∘f)` basis it is over `(t, i, e_h)` with
/// `i` the `(u, e_f, e_g)` path index of `g∘f`. `perm[v][x][left] = right`.
pub fn assoc_perm(
    f: &Array2<usize>,
    g: &Array2<usize>,
    h: &Array2<usize>,
) -> Vec<Vec<Vec<usize>>> {
    let ns = f.ncols();
    let nd = f.nrows();
    let ne = g.nrows();
    let nq = h.nrows();
    assert_eq!(g.ncols(), nd);
    assert_eq!(h.ncols(), ne);
    let gf = mat_mul_usize(g, f);
    let mut out = vec![vec![Vec::new(); nq]; ns];
    for v in 0..ns {
        for x in 0..nq {
            // enumerate in left order, compute right index
            let mut perm = Vec::new();
            for u in 0..nd {
                for e_f in 0..f[(u, v)] {
                    for t in 0..ne {
                        for e_g in 0..g[(t, u)] {
                            for e_h in 0..h[(x, t)] {
                                // right index: (t, i, e_h), i = index of (u, e_f, e_g) in g∘f paths v→t
                                let mut i = 0usize;
                                for m in 0..u {
                                    i += f[(m, v)] * g[(t, m)];
                                }
                                i += e_f * g[(t, u)] + e_g;
                                let mut right = 0usize;
                                for s in 0..t {
                                    right += gf[(s, v)] * h[(x, s)];
                                }
                                right += i * h[(x, t)] + e_h;
                                perm.push(right);
                            }
                        }
                    }
                }
            }
            out[v][x] = perm;
        }
    }
    out
}

/// Lift per-edge-space permutations to the path basis of a binary composite
/// `second ∘ first`. `inner[v][u]` permutes the `(v → u)` basis of `first`
/// (old index → new index), `outer[u][x]` the `(u → x)` basis of `second`;
/// either may be omitted. Returns `perm[v][x][old_path] = new_path`.
pub fn lift_path_perm(
    first: &Array2<usize>,
    second: &Array2<usize>,
    inner: Option<&Vec<Vec<Vec<usize>>>>,
    outer: Option<&Vec<Vec<Vec<usize>>>>,
) -> Vec<Vec<Vec<usize>>> {
    let basis = PathBasis::new(first, second).expect("composable");
    let ns = first.ncols();
    let nt = second.nrows();
    let mut out = vec![vec![Vec::new(); nt]; ns];
    for v in 0..ns {
        for x in 0..nt {
            let mut perm = Vec::with_capacity(basis.count(v, x));
            for &(u, e1, e2) in basis.paths(v, x) {
                let ne1 = inner.map_or(e1, |p| p[v][u][e1]);
                let ne2 = outer.map_or(e2, |p| p[u][x][e2]);
                perm.push(basis.index_of(v, x, u, ne1, ne2));
            }
            out[v][x] = perm;
        }
    }
    out
}

/// Trivial permutation table over the hom spaces of an adjacency, for
/// re-association calls that touch only one side.
pub fn identity_perm_table(adj: &Array2<usize>) -> Vec<Vec<Vec<usize>>> {
    let (nt, ns) = adj.dim();
    (0..ns)
        .map(|v| (0..nt).map(|w| (0..adj[(w, v)]).collect()).collect())
        .collect()
}

/// Re-index a natural transformation whose domain and codomain composites are
/// bracketed `(h∘g)∘f` into the `h∘(g∘f)` bracketing (or back with
/// `invert = true`). `dom_perm`/`cod_perm` are [`assoc_perm`] tables for the
/// domain and codomain triples.
pub fn reassociate(
    eta: &NatTrans,
    dom_perm: &[Vec<Vec<usize>>],
    cod_perm: &[Vec<Vec<usize>>],
    invert: bool,
) -> NatTrans {
    let mut out = eta.clone();
    for v in 0..eta.n_source() {
        for w in 0..eta.n_target() {
            let b = eta.block(v, w);
            let rp = &cod_perm[v][w];
            let cp = &dom_perm[v][w];
            let mut nb = czeros(b.nrows(), b.ncols());
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    if invert {
                        nb[(i, j)] = b[(rp[i], cp[j])];
                    } else {
                        nb[(rp[i], cp[j])] = b[(i, j)];
                    }
                }
            }
            out.blocks[v][w] = nb;
        }
    }
    out
}

/// Both trace-compatibility identities for `η ∈ End(Σ∘Λ)`:
/// conjugating by the Σ-duality cups computes the composite trace from
/// End(Λ), and closing the Λ-strand computes it from End(Σ). Returns the
/// worse of the two residuals.
pub fn nt_trace_compat_check(lambda: &GraphFunctor, sigma: &GraphFunctor, eta: &NatTrans) -> Result<f64> {
    let mu = lambda.source().weights();
    let nu = lambda.target().weights();
    let pi = sigma.target().weights();
    if !lambda.target().same_labels(sigma.source()) {
        return Err(Error::Structure("trace compat: Λ target != Σ source".into()));
    }
    let la = lambda.adjacency();
    let sa = sigma.adjacency();
    let composite = mat_mul_usize(sa, la);
    if eta.dom() != &composite || !eta.is_endo() {
        return Err(Error::Structure(
            "trace compat: η must be an endomorphism of Σ∘Λ".into(),
        ));
    }

    let middle = nt_trace(eta, mu, pi)?;

    // Left identity: Tr^Λ(β*_Λ ∘ Σ′(η) ∘ β_Λ) with β = ρ′ of the Σ-duality.
    let beta = DualitySolution::with_weights(sa, nu, pi).cup_prime();
    let beta_l = whisker_right(&beta, la)?; // Λ → (Σ′Σ)Λ
    let sig_eta = whisker_left(&sigma.adjoint().adjacency().clone(), eta)?; // Σ′(ΣΛ) → Σ′(ΣΛ)
    // reassociate Σ′∘(Σ∘Λ) to (Σ′∘Σ)∘Λ
    let perm = assoc_perm(la, sa, sigma.adjoint().adjacency());
    let sig_eta_l = reassociate(&sig_eta, &perm, &perm, true);
    let lhs_nt = nt_vertical(&beta_l.star(), &nt_vertical(&sig_eta_l, &beta_l)?)?;
    let lhs = nt_trace(&lhs_nt, mu, nu)?;

    // Right identity: Tr^Σ(Σ(ρ̄*) ∘ η_{Λ′} ∘ Σ(ρ̄)) with ρ̄ the Λ-duality cup.
    let rho_bar = DualitySolution::with_weights(la, mu, nu).cup();
    let sig_rho = whisker_left(sa, &rho_bar)?; // Σ → Σ(ΛΛ′)
    let eta_lp = whisker_right(eta, lambda.adjoint().adjacency())?; // (ΣΛ)Λ′ → (ΣΛ)Λ′
    let perm2 = assoc_perm(lambda.adjoint().adjacency(), la, sa);
    let eta_lp_r = reassociate(&eta_lp, &perm2, &perm2, false);
    let rhs_nt = nt_vertical(&sig_rho.star(), &nt_vertical(&eta_lp_r, &sig_rho)?)?;
    let rhs = nt_trace(&rhs_nt, nu, pi)?;

    Ok((lhs - middle).norm().max((rhs - middle).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn cat(weights: &[f64]) -> WeightedCategory {
        WeightedCategory::anonymous(weights.to_vec()).unwrap()
    }

    fn functor(src: &[f64], tgt: &[f64], adj: Array2<usize>) -> GraphFunctor {
        GraphFunctor::new(cat(src), cat(tgt), adj).unwrap()
    }

    #[test]
    fn compose_all_ones() {
        let f = functor(&[0.5, 0.5], &[0.5, 0.5], array![[1, 1], [1, 1]]);
        let (gf, pb) = compose_functors(&f, &f).unwrap();
        assert_eq!(gf.adjacency(), &array![[2, 2], [2, 2]]);
        assert_eq!(pb.count(0, 0), 2);
        assert_eq!(pb.paths(0, 1), &[(0, 0, 0), (1, 0, 0)]);
    }

    #[test]
    fn compose_one_source_two_targets() {
        let f = functor(&[1.0], &[0.5, 0.5], array![[1], [1]]);
        let g = functor(&[0.5, 0.5], &[1.0], array![[1, 1]]);
        let (gf, pb) = compose_functors(&f, &g).unwrap();
        assert_eq!(gf.adjacency(), &array![[2]]);
        assert_eq!(pb.count(0, 0), 2);
    }

    #[test]
    fn compose_matches_hand_product() {
        // [[1,1],[0,1]] ∘ [[1,0],[1,1]] worked out by hand: [[2,1],[1,1]]
        let f = functor(&[0.5, 0.5], &[0.5, 0.5], array![[1, 0], [1, 1]]);
        let g = adjoint_functor(&f);
        let (gf, _) = compose_functors(&f, &g).unwrap();
        assert_eq!(gf.adjacency(), &array![[2, 1], [1, 1]]);
    }

    #[test]
    fn adjoint_is_involutive_and_bifaithful() {
        let f = functor(&[0.3, 0.7], &[0.4, 0.6], array![[1, 2], [0, 3]]);
        let a = f.adjoint();
        assert_eq!(a.adjacency(), &array![[1, 0], [2, 3]]);
        assert_eq!(a.adjoint(), f);
        check_bifaithful(a.adjacency()).unwrap();
    }

    #[test]
    fn categorical_trace_examples() {
        let m = cat(&[0.25, 0.75]);
        // identity on the multiplicity-one object: trace = Σ μ_v = 1
        let tr = categorical_trace(&[1, 1], &[CMat::eye(1), CMat::eye(1)], &m).unwrap();
        assert!((tr - c(1.0)).norm() < 1e-15);
        // single matrix unit in the v-block
        let mut e11 = czeros(2, 2);
        e11[(0, 0)] = c(1.0);
        let tr = categorical_trace(&[2, 1], &[e11, czeros(1, 1)], &m).unwrap();
        assert!((tr - c(0.25)).norm() < 1e-15);
    }

    #[test]
    fn categorical_trace_is_tracial() {
        let m = cat(&[0.2, 0.8]);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let adj = Array2::<usize>::from_shape_vec((2, 1), vec![3, 2]).unwrap();
        let a = NatTrans::random(&adj, &adj, &mut rng);
        let b = NatTrans::random(&adj, &adj, &mut rng);
        let ab = nt_vertical(&a, &b).unwrap();
        let ba = nt_vertical(&b, &a).unwrap();
        let mu = [1.0];
        let t1 = nt_trace(&ab, &mu, m.weights()).unwrap();
        let t2 = nt_trace(&ba, &mu, m.weights()).unwrap();
        assert!((t1 - t2).norm() < 1e-12);
    }

    #[test]
    fn nt_trace_matrix_unit() {
        // Tr(σ σ*) on the (u, w) block is μ_u ν_w.
        let dom = array![[2, 1], [1, 1]];
        let mu = [0.4, 0.6];
        let nu = [0.3, 0.7];
        let mut eta = NatTrans::zero(&dom, &dom);
        eta.block_mut(0, 0)[(1, 1)] = c(1.0);
        let tr = nt_trace(&eta, &mu, &nu).unwrap();
        assert!((tr - c(0.4 * 0.3)).norm() < 1e-15);
    }

    #[test]
    fn nt_trace_identity() {
        let adj = array![[2, 1], [1, 1]];
        let mu = [0.4, 0.6];
        let nu = [0.3, 0.7];
        let id = NatTrans::identity(&adj);
        let expect: f64 = (0..2)
            .flat_map(|v| (0..2).map(move |w| (v, w)))
            .map(|(v, w)| mu[v] * nu[w] * adj[(w, v)] as f64)
            .sum();
        let tr = nt_trace(&id, &mu, &nu).unwrap();
        assert!((tr - c(expect)).norm() < 1e-14);
    }

    #[test]
    fn inner_product_definite_and_faithful() {
        let dom = array![[1, 2], [2, 0]];
        let cod = array![[2, 1], [1, 1]];
        let mu = [0.5, 0.5];
        let nu = [0.25, 0.75];
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let eta = NatTrans::random(&dom, &cod, &mut rng);
        let n2 = nt_inner(&eta, &eta, &mu, &nu).unwrap();
        assert!(n2.im.abs() < 1e-14);
        assert!(n2.re > 0.0);
        let kappa = NatTrans::random(&dom, &cod, &mut rng);
        // agreement with the flattened weighted dot product
        let mut flat = C64::ZERO;
        for v in 0..2 {
            for w in 0..2 {
                let (e, k) = (eta.block(v, w), kappa.block(v, w));
                for (x, y) in e.iter().zip(k.iter()) {
                    flat += c(mu[v] * nu[w]) * x * y.conj();
                }
            }
        }
        let ip = nt_inner(&eta, &kappa, &mu, &nu).unwrap();
        assert!((ip - flat).norm() < 1e-12);
        // distinct matrix units are orthogonal
        let mut a = NatTrans::zero(&dom, &cod);
        let mut b = NatTrans::zero(&dom, &cod);
        a.block_mut(0, 0)[(0, 0)] = c(1.0);
        b.block_mut(0, 0)[(1, 0)] = c(1.0);
        assert_eq!(nt_inner(&a, &b, &mu, &nu).unwrap(), C64::ZERO);
    }

    #[test]
    fn whisker_with_identity_functor() {
        let dom = array![[1, 2], [2, 0]];
        let cod = array![[2, 1], [1, 1]];
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let eta = NatTrans::random(&dom, &cod, &mut rng);
        let idf = Array2::<usize>::eye(2);
        let l = whisker_left(&idf, &eta).unwrap();
        let r = whisker_right(&eta, &idf).unwrap();
        assert_eq!(&l, &eta);
        assert_eq!(&r, &eta);
    }

    #[test]
    fn whisker_of_identity_is_identity() {
        let g = array![[1, 2], [2, 0]];
        let f = array![[2, 1], [1, 1]];
        let id_g = NatTrans::identity(&g);
        let l = whisker_left(&f, &id_g).unwrap();
        assert_eq!(l, NatTrans::identity(&mat_mul_usize(&f, &g)));
    }

    #[test]
    fn whiskering_commutes_with_vertical() {
        let a1 = array![[1, 2], [2, 1]];
        let a2 = array![[2, 1], [1, 1]];
        let a3 = array![[1, 1], [1, 2]];
        let f = array![[2, 1], [1, 1]];
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let eta = NatTrans::random(&a1, &a2, &mut rng);
        let kap = NatTrans::random(&a2, &a3, &mut rng);
        let lhs = whisker_left(&f, &nt_vertical(&kap, &eta).unwrap()).unwrap();
        let rhs = nt_vertical(
            &whisker_left(&f, &kap).unwrap(),
            &whisker_left(&f, &eta).unwrap(),
        )
        .unwrap();
        for v in 0..2 {
            for w in 0..2 {
                assert!(max_abs_diff(lhs.block(v, w), rhs.block(v, w)) < 1e-12);
            }
        }
    }

    #[test]
    fn star_reverses_vertical() {
        let a1 = array![[1, 2], [2, 1]];
        let a2 = array![[2, 1], [1, 1]];
        let a3 = array![[1, 1], [1, 2]];
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let eta = NatTrans::random(&a1, &a2, &mut rng);
        let kap = NatTrans::random(&a2, &a3, &mut rng);
        let lhs = nt_vertical(&kap, &eta).unwrap().star();
        let rhs = nt_vertical(&eta.star(), &kap.star()).unwrap();
        for v in 0..2 {
            for w in 0..2 {
                assert!(max_abs_diff(lhs.block(v, w), rhs.block(v, w)) < 1e-12);
            }
        }
    }

    #[test]
    fn interchange_law() {
        // α, γ: C → D transformations; β, δ: D → E transformations.
        let f1 = array![[1, 2], [2, 1]];
        let g1 = array![[2, 1], [1, 1]];
        let h1 = array![[1, 1], [1, 2]];
        let f2 = array![[2, 1], [1, 2]];
        let g2 = array![[1, 2], [1, 1]];
        let h2 = array![[2, 2], [1, 1]];
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let gamma = NatTrans::random(&f1, &g1, &mut rng);
        let alpha = NatTrans::random(&g1, &h1, &mut rng);
        let delta = NatTrans::random(&f2, &g2, &mut rng);
        let beta = NatTrans::random(&g2, &h2, &mut rng);
        let lhs = nt_vertical(
            &nt_tensor(&beta, &alpha).unwrap(),
            &nt_tensor(&delta, &gamma).unwrap(),
        )
        .unwrap();
        let rhs = nt_tensor(
            &nt_vertical(&beta, &delta).unwrap(),
            &nt_vertical(&alpha, &gamma).unwrap(),
        )
        .unwrap();
        let diff = lhs.sub(&rhs).unwrap().max_abs();
        assert!(diff < 1e-11, "interchange residual {diff}");
    }

    #[test]
    fn tensor_two_realizations_agree() {
        let f1 = array![[1, 2], [2, 1]];
        let g1 = array![[2, 1], [1, 1]];
        let f2 = array![[2, 1], [1, 2]];
        let g2 = array![[1, 2], [1, 1]];
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let eta = NatTrans::random(&f1, &g1, &mut rng);
        let kap = NatTrans::random(&f2, &g2, &mut rng);
        let a = nt_tensor(&kap, &eta).unwrap();
        let b = nt_vertical(
            &whisker_left(&g2, &eta).unwrap(),
            &whisker_right(&kap, &f1).unwrap(),
        )
        .unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn cup_single_edge_unit_vector() {
        let f = functor(&[1.0], &[1.0], array![[1]]);
        let d = DualitySolution::tracial(&f);
        let cup = d.cup_prime();
        assert_eq!(cup.block(0, 0).nrows(), 1);
        assert!((cup.block(0, 0)[(0, 0)] - c(1.0)).norm() < 1e-15);
        assert!((d.anticlockwise_loop(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loop_values_match_closed_form() {
        let f = functor(&[0.4, 0.6], &[0.5, 0.5], array![[1, 2], [1, 1]]);
        let d = DualitySolution::tracial(&f);
        let cup_p = d.cup_prime();
        let closed = nt_vertical(&cup_p.star(), &cup_p).unwrap();
        for v in 0..2 {
            let expect: f64 = (0..2)
                .map(|w| f.adjacency()[(w, v)] as f64 * 0.5 / f.source().weight(v))
                .sum();
            assert!((closed.block(v, v)[(0, 0)] - c(expect)).norm() < 1e-13);
            assert!((d.anticlockwise_loop(v) - expect).abs() < 1e-13);
        }
        let cup = d.cup();
        let closed = nt_vertical(&cup.star(), &cup).unwrap();
        for w in 0..2 {
            assert!((closed.block(w, w)[(0, 0)] - c(d.clockwise_loop(w))).norm() < 1e-13);
        }
    }

    #[test]
    fn zig_zag_identities() {
        let f = functor(&[0.4, 0.6], &[0.55, 0.45], array![[1, 2], [1, 1]]);
        let fa = f.adjacency();
        let fpa = f.adjoint().adjacency().clone();
        let d = DualitySolution::tracial(&f);
        let rho = d.cup();
        let rho_p = d.cup_prime();

        // (ρ* 1_F) ∘ assoc ∘ (1_F ρ′) = 1_F
        let up = whisker_right(&rho.star(), fa).unwrap(); // (FF′)F → F
        let down = whisker_left(fa, &rho_p).unwrap(); // F → F(F′F)
        let perm = assoc_perm(fa, &fpa, fa);
        let dom_id = identity_perm_table(down.dom());
        let down_l = reassociate(&down, &dom_id, &perm, true);
        let z1 = nt_vertical(&up, &down_l).unwrap();
        assert!(z1.sub(&NatTrans::identity(fa)).unwrap().max_abs() < 1e-12);

        // (ρ′* 1_{F′}) ∘ assoc ∘ (1_{F′} ρ) = 1_{F′}
        let up2 = whisker_right(&rho_p.star(), &fpa).unwrap(); // (F′F)F′ → F′
        let down2 = whisker_left(&fpa, &rho).unwrap(); // F′ → F′(FF′)
        let perm2 = assoc_perm(&fpa, fa, &fpa);
        let dom_id2 = identity_perm_table(down2.dom());
        let down2_l = reassociate(&down2, &dom_id2, &perm2, true);
        let z2 = nt_vertical(&up2, &down2_l).unwrap();
        assert!(z2.sub(&NatTrans::identity(&fpa)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn trace_compat_identity_and_random() {
        // Λ: M → N, Σ: N → Q with commensurate weights.
        let m = cat(&[0.4, 0.6]);
        let n = cat(&[0.3, 0.7]);
        let q = cat(&[0.2, 0.8]);
        let la = GraphFunctor::new(m, n.clone(), array![[1, 2], [1, 1]]).unwrap();
        let si = GraphFunctor::new(n, q, array![[2, 1], [1, 1]]).unwrap();
        let comp = mat_mul_usize(si.adjacency(), la.adjacency());
        let id = NatTrans::identity(&comp);
        assert!(nt_trace_compat_check(&la, &si, &id).unwrap() < 1e-12);
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for _ in 0..5 {
            let eta = NatTrans::random(&comp, &comp, &mut rng);
            let res = nt_trace_compat_check(&la, &si, &eta).unwrap();
            assert!(res < 1e-11, "trace compat residual {res}");
        }
    }
}
