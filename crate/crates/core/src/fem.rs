//! Frame models, Euler-Bernoulli element stiffness as matrix polynomials in the
//! cross-section area, and assembly with linked design variables.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::path::Path;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::poly::{MatrixPolynomial, MultiIndex};

/// Degrees of freedom per node: `(u_x, u_y, theta)`.
pub const DOFS_PER_NODE: usize = 3;

/// Moment of inertia as a polynomial in the area, `I(a) = k1 a + k2 a^2 + k3 a^3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionLaw {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
}

impl CrossSectionLaw {
    pub fn new(name: &str, k1: f64, k2: f64, k3: f64) -> Self {
        Self {
            name: name.to_string(),
            k1,
            k2,
            k3,
        }
    }

    /// Axial-only member (no bending stiffness).
    pub fn bar() -> Self {
        Self::new("bar", 0.0, 0.0, 0.0)
    }

    /// Solid square, `I = a^2 / 12`.
    pub fn solid_square() -> Self {
        Self::new("solid_square", 0.0, 1.0 / 12.0, 0.0)
    }

    /// Square tube with outer side `10t` and wall `t`: `A = 36t^2`, `I = 492t^4`.
    pub fn square_tube() -> Self {
        Self::new("square_tube", 0.0, 41.0 / 108.0, 0.0)
    }

    /// Rectangular tube `10t x 20t`, wall `t`, strong axis: `A = 56t^2`, `I = 33344t^4/12`.
    pub fn rect_tube() -> Self {
        Self::new("rect_tube", 0.0, 33344.0 / 37632.0, 0.0)
    }

    /// Circular tube with outer diameter `10t` and wall `t`: `A = 9 pi t^2`, `I = 369 pi t^4 / 4`.
    pub fn circular_tube() -> Self {
        Self::new("circular_tube", 0.0, 369.0 / (324.0 * PI), 0.0)
    }

    /// I-section of width `10t` and height `10t`, flanges and web of thickness `t`:
    /// `A = 28t^2`, `I = 5392t^4/12`.
    pub fn i_section_10x10() -> Self {
        Self::new("i_section_10x10", 0.0, 5392.0 / (12.0 * 784.0), 0.0)
    }

    /// I-section of width `10t` and height `20t`, flanges and web of thickness `t`:
    /// `A = 38t^2`, `I = 27512t^4/12`.
    pub fn i_section_10x20() -> Self {
        Self::new("i_section_10x20", 0.0, 27512.0 / (12.0 * 1444.0), 0.0)
    }

    /// Rectangle of fixed width `b` and variable height, `I = a^3 / (12 b^2)`.
    pub fn rectangle_fixed_width(b: f64) -> Self {
        Self::new("rectangle_fixed_width", 0.0, 0.0, 1.0 / (12.0 * b * b))
    }

    /// Looks up a built-in law by name.
    pub fn builtin(name: &str) -> Option<Self> {
        Some(match name {
            "bar" => Self::bar(),
            "solid_square" => Self::solid_square(),
            "square_tube" => Self::square_tube(),
            "rect_tube" => Self::rect_tube(),
            "circular_tube" => Self::circular_tube(),
            "i_section_10x10" => Self::i_section_10x10(),
            "i_section_10x20" => Self::i_section_10x20(),
            _ => return None,
        })
    }

    pub fn inertia(&self, a: f64) -> f64 {
        a * (self.k1 + a * (self.k2 + a * self.k3))
    }

    fn coefficients(&self) -> [f64; 3] {
        [self.k1, self.k2, self.k3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub label: Option<String>,
}

/// Fixed translations and rotation at a node.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    pub node: u32,
    pub ux: bool,
    pub uy: bool,
    pub rot: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Design {
    /// Index into the model's groups.
    Group(usize),
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub id: u32,
    /// Node indices in id order.
    pub nodes: (usize, usize),
    pub youngs: f64,
    pub density: f64,
    pub law: CrossSectionLaw,
    pub design: Design,
    dx: f64,
    dy: f64,
}

impl Element {
    pub fn length(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadCase {
    pub id: String,
    /// Nodal loads on the unsupported global dofs as `(global dof, value)`.
    pub forces: Vec<(usize, f64)>,
    pub cbar: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub id: String,
    /// Element indices.
    pub members: Vec<usize>,
}

/// Validated frame model.
#[derive(Clone, Debug)]
pub struct FrameModel {
    pub name: String,
    nodes: Vec<Node>,
    elements: Vec<Element>,
    supports: Vec<Support>,
    load_cases: Vec<LoadCase>,
    groups: Vec<Group>,
    /// Global dof to free dof, `None` for supported dofs.
    free_index: Vec<Option<usize>>,
    n_dof: usize,
}

// ---------------------------------------------------------------------------
// File format

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<NodeSpec>,
    pub elements: Vec<ElementSpec>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub laws: IndexMap<String, LawSpec>,
    #[serde(default)]
    pub supports: Vec<SupportSpec>,
    pub loadcases: Vec<LoadCaseSpec>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub groups: IndexMap<String, Vec<u32>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementSpec {
    pub id: u32,
    pub n1: u32,
    pub n2: u32,
    #[serde(rename = "E")]
    pub youngs: f64,
    pub rho: f64,
    pub law: String,
    #[serde(
        default,
        deserialize_with = "opt_string_or_number",
        skip_serializing_if = "Option::is_none"
    )]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawSpec {
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportSpec {
    pub node: u32,
    #[serde(default)]
    pub ux: bool,
    #[serde(default)]
    pub uy: bool,
    #[serde(default)]
    pub rot: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoadCaseSpec {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    pub cbar: f64,
    pub loads: Vec<LoadSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoadSpec {
    pub node: u32,
    #[serde(default)]
    pub fx: f64,
    #[serde(default)]
    pub fy: f64,
    #[serde(default)]
    pub m: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StringOrNumber {
    S(String),
    N(serde_json::Number),
}

impl From<StringOrNumber> for String {
    fn from(v: StringOrNumber) -> String {
        match v {
            StringOrNumber::S(s) => s,
            StringOrNumber::N(n) => n.to_string(),
        }
    }
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    StringOrNumber::deserialize(d).map(String::from)
}

fn opt_string_or_number<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<String>, D::Error> {
    Ok(Option::<StringOrNumber>::deserialize(d)?.map(String::from))
}

const FRAME24: &str = include_str!("../models/frame24.json");
const PART20: &str = include_str!("../models/part20.json");

/// Names of the models shipped with the library.
pub const BUNDLED_MODELS: [&str; 2] = ["frame24", "part20"];

/// JSON text of a bundled model.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    match name {
        "frame24" => Some(FRAME24),
        "part20" => Some(PART20),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Model construction

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

impl FrameModel {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let src = bundled_source(name).ok_or_else(|| invalid(format!("no bundled model {name:?}")))?;
        Self::from_json_str(src)
    }

    /// Validates a parsed model file, including the rigid-body check at unit areas.
    pub fn from_spec(spec: &ModelFile) -> Result<Self> {
        let mut node_specs: Vec<&NodeSpec> = spec.nodes.iter().collect();
        node_specs.sort_by_key(|n| n.id);
        if node_specs.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(invalid("duplicate node id"));
        }
        let nodes: Vec<Node> = node_specs
            .iter()
            .map(|n| Node {
                id: n.id,
                x: n.x,
                y: n.y,
                label: n.label.clone(),
            })
            .collect();
        let node_pos: HashMap<u32, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let lookup = |id: u32, what: &str| {
            node_pos
                .get(&id)
                .copied()
                .ok_or_else(|| invalid(format!("{what} references unknown node {id}")))
        };

        // group order: keys of `groups`, then first appearance in elements
        let mut group_ids: Vec<String> = spec.groups.keys().cloned().collect();
        for e in &spec.elements {
            if let Some(g) = &e.group {
                if !group_ids.contains(g) {
                    group_ids.push(g.clone());
                }
            }
        }
        let group_pos: HashMap<&str, usize> = group_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let mut listed: HashMap<u32, usize> = HashMap::new();
        for (g, members) in &spec.groups {
            for &eid in members {
                if listed.insert(eid, group_pos[g.as_str()]).is_some() {
                    return Err(invalid(format!("element {eid} listed in several groups")));
                }
            }
        }

        let mut elements = Vec::with_capacity(spec.elements.len());
        let mut seen = std::collections::HashSet::new();
        for e in &spec.elements {
            if !seen.insert(e.id) {
                return Err(invalid(format!("duplicate element id {}", e.id)));
            }
            let (i, j) = (lookup(e.n1, "element")?, lookup(e.n2, "element")?);
            let dx = nodes[j].x - nodes[i].x;
            let dy = nodes[j].y - nodes[i].y;
            if dx.hypot(dy) <= 0.0 {
                return Err(Error::ZeroLength { element: e.id });
            }
            if !(e.youngs > 0.0) || !(e.rho > 0.0) {
                return Err(invalid(format!("element {}: E and rho must be positive", e.id)));
            }
            let law = match spec.laws.get(&e.law) {
                Some(l) => CrossSectionLaw::new(&e.law, l.k1, l.k2, l.k3),
                None => CrossSectionLaw::builtin(&e.law)
                    .ok_or_else(|| invalid(format!("element {}: unknown law {:?}", e.id, e.law)))?,
            };
            if law.k1 < 0.0 || law.k2 < 0.0 || law.k3 < 0.0 {
                return Err(invalid(format!("law {:?} has a negative coefficient", e.law)));
            }
            let from_field = e.group.as_ref().map(|g| group_pos[g.as_str()]);
            let from_map = listed.remove(&e.id);
            let design = match (e.area, from_field, from_map) {
                (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                    return Err(invalid(format!("element {} has both an area and a group", e.id)))
                }
                (Some(a), None, None) => {
                    if !(a >= 0.0) {
                        return Err(invalid(format!("element {}: negative area", e.id)));
                    }
                    Design::Fixed(a)
                }
                (None, Some(g1), Some(g2)) if g1 != g2 => {
                    return Err(invalid(format!("element {} is in two groups", e.id)))
                }
                (None, Some(g), _) | (None, None, Some(g)) => Design::Group(g),
                (None, None, None) => {
                    return Err(invalid(format!("element {} has neither area nor group", e.id)))
                }
            };
            elements.push(Element {
                id: e.id,
                nodes: (i, j),
                youngs: e.youngs,
                density: e.rho,
                law,
                design,
                dx,
                dy,
            });
        }
        if let Some(eid) = listed.keys().min() {
            return Err(invalid(format!("group lists unknown element {eid}")));
        }
        let mut groups: Vec<Group> = group_ids
            .into_iter()
            .map(|id| Group {
                id,
                members: Vec::new(),
            })
            .collect();
        for (k, e) in elements.iter().enumerate() {
            if let Design::Group(g) = e.design {
                groups[g].members.push(k);
            }
        }
        if let Some(g) = groups.iter().find(|g| g.members.is_empty()) {
            return Err(invalid(format!("group {:?} has no members", g.id)));
        }

        let mut fixed = vec![false; nodes.len() * DOFS_PER_NODE];
        let mut supports = Vec::new();
        for s in &spec.supports {
            let n = lookup(s.node, "support")?;
            fixed[DOFS_PER_NODE * n] |= s.ux;
            fixed[DOFS_PER_NODE * n + 1] |= s.uy;
            fixed[DOFS_PER_NODE * n + 2] |= s.rot;
            supports.push(Support {
                node: s.node,
                ux: s.ux,
                uy: s.uy,
                rot: s.rot,
            });
        }
        let mut free_index = vec![None; fixed.len()];
        let mut n_dof = 0;
        for (g, f) in fixed.iter().enumerate() {
            if !f {
                free_index[g] = Some(n_dof);
                n_dof += 1;
            }
        }

        if spec.loadcases.is_empty() {
            return Err(invalid("no load cases"));
        }
        let mut load_cases = Vec::new();
        for lc in &spec.loadcases {
            if !(lc.cbar > 0.0) {
                return Err(invalid(format!("load case {}: cbar must be positive", lc.id)));
            }
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for l in &lc.loads {
                let n = lookup(l.node, "load")?;
                for (k, v) in [l.fx, l.fy, l.m].into_iter().enumerate() {
                    let g = DOFS_PER_NODE * n + k;
                    if v != 0.0 && !fixed[g] {
                        *acc.entry(g).or_insert(0.0) += v;
                    }
                }
            }
            acc.retain(|_, v| *v != 0.0);
            if acc.is_empty() {
                return Err(invalid(format!("load case {} has no free-dof load", lc.id)));
            }
            load_cases.push(LoadCase {
                id: lc.id.clone(),
                forces: acc.into_iter().collect(),
                cbar: lc.cbar,
            });
        }

        let model = FrameModel {
            name: spec.name.clone().unwrap_or_else(|| "model".into()),
            nodes,
            elements,
            supports,
            load_cases,
            groups,
            free_index,
            n_dof,
        };
        model.assemble()?;
        Ok(model)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn supports(&self) -> &[Support] {
        &self.supports
    }

    pub fn load_cases(&self) -> &[LoadCase] {
        &self.load_cases
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn n_vars(&self) -> usize {
        self.groups.len()
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    /// Free dof of a global dof, `None` if supported.
    pub fn free_dof(&self, node_index: usize, local: usize) -> Option<usize> {
        self.free_index[DOFS_PER_NODE * node_index + local]
    }

    /// `sum_{e in g} rho_e l_e` per group.
    pub fn group_weights(&self) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| {
                g.members
                    .iter()
                    .map(|&k| self.elements[k].density * self.elements[k].length())
                    .sum()
            })
            .collect()
    }

    /// Area of every element for group areas `a`.
    pub fn element_areas(&self, a: &[f64]) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| match e.design {
                Design::Group(g) => a[g],
                Design::Fixed(v) => v,
            })
            .collect()
    }

    fn element_dofs(&self, e: &Element) -> [Option<usize>; 6] {
        let (i, j) = e.nodes;
        let mut out = [None; 6];
        for k in 0..3 {
            out[k] = self.free_dof(i, k);
            out[3 + k] = self.free_dof(j, k);
        }
        out
    }

    /// Global assembly with support elimination and the unit-area rigid-body check.
    pub fn assemble(&self) -> Result<AssembledStiffness> {
        let n = self.n_dof;
        let mut k0 = DMatrix::zeros(n, n);
        let mut coeffs: Vec<[Option<DMatrix<f64>>; 3]> =
            (0..self.groups.len()).map(|_| [None, None, None]).collect();
        let mut factor_rows: Vec<[Vec<DVector<f64>>; 3]> =
            (0..self.groups.len()).map(|_| Default::default()).collect();
        for e in &self.elements {
            let dofs = self.element_dofs(e);
            let local = element_stiffness(e)?;
            let scatter = |target: &mut DMatrix<f64>, c: &DMatrix<f64>, s: f64| {
                for (p, dp) in dofs.iter().enumerate() {
                    let Some(dp) = dp else { continue };
                    for (q, dq) in dofs.iter().enumerate() {
                        if let Some(dq) = dq {
                            target[(*dp, *dq)] += s * c[(p, q)];
                        }
                    }
                }
            };
            match e.design {
                Design::Fixed(a) => scatter(&mut k0, &local.evaluate(&[a]), 1.0),
                Design::Group(g) => {
                    for (power, row) in element_factor_rows(e) {
                        let mut full = DVector::zeros(n);
                        for (p, dp) in dofs.iter().enumerate() {
                            if let Some(dp) = dp {
                                full[*dp] = row[p];
                            }
                        }
                        factor_rows[g][power - 1].push(full);
                    }
                    for (m, c) in local.terms() {
                        let i = m.degree() as usize - 1;
                        let slot = coeffs[g][i].get_or_insert_with(|| DMatrix::zeros(n, n));
                        scatter(slot, c, 1.0);
                    }
                }
            }
        }
        let forces = self
            .load_cases
            .iter()
            .map(|lc| {
                let mut f = DVector::zeros(n);
                for &(g, v) in &lc.forces {
                    f[self.free_index[g].expect("loads on free dofs only")] += v;
                }
                f
            })
            .collect();
        let factors = factor_rows
            .into_iter()
            .map(|rows| {
                rows.map(|r| {
                    (!r.is_empty()).then(|| {
                        DMatrix::from_fn(r.len(), n, |i, k| r[i][k])
                    })
                })
            })
            .collect();
        let asm = AssembledStiffness {
            n_dof: n,
            k0,
            coeffs,
            factors,
            forces,
            cbar: self.load_cases.iter().map(|l| l.cbar).collect(),
            case_ids: self.load_cases.iter().map(|l| l.id.clone()).collect(),
            group_weights: self.group_weights(),
        };
        for j in 0..asm.n_load_cases() {
            let k1 = asm.stiffness_at(j, &vec![1.0; self.n_vars()]);
            if n == 0 || k1.cholesky().is_none() {
                return Err(Error::RigidBodyMotion {
                    load_case: asm.case_ids[j].clone(),
                });
            }
        }
        Ok(asm)
    }

    /// Structural weight `sum_g a_g (sum rho l)_g`; fixed elements excluded.
    pub fn weight(&self, a: &[f64]) -> f64 {
        weight(&self.group_weights(), a)
    }
}

/// Weight for per-group multipliers `(sum rho l)_g`.
pub fn weight(group_weights: &[f64], a: &[f64]) -> f64 {
    group_weights.iter().zip(a).map(|(w, a)| w * a).sum()
}

/// 6x6 element stiffness in global axes as a polynomial in the element area.
pub fn element_stiffness(e: &Element) -> Result<MatrixPolynomial> {
    let l = e.length();
    if l <= 0.0 {
        return Err(Error::ZeroLength { element: e.id });
    }
    let (c, s) = (e.dx / l, e.dy / l);
    let rot = rotation(c, s);
    let axial = rot.transpose() * local_axial(e.youngs / l) * &rot;
    let bending = rot.transpose() * local_bending(e.youngs, l) * &rot;
    let mut p = MatrixPolynomial::zero(1, 6);
    let kappa = e.law.coefficients();
    let mut deg1 = axial;
    deg1 += &bending * kappa[0];
    p.add_term(MultiIndex::new(vec![1]), &symmetrize(deg1));
    for (i, &k) in kappa.iter().enumerate().skip(1) {
        if k != 0.0 {
            p.add_term(MultiIndex::new(vec![i as u32 + 1]), &symmetrize(&bending * k));
        }
    }
    Ok(p)
}

/// Rank-one pieces `(power, r)` with `sum r r^T` equal to the element's
/// coefficient matrix of that power: one axial row and two bending rows from
/// `EI/l (3 (t1 + t2 - 2 psi)^2 + (t1 - t2)^2)` with `psi` the chord rotation.
pub fn element_factor_rows(e: &Element) -> Vec<(usize, [f64; 6])> {
    let l = e.length();
    let (c, s) = (e.dx / l, e.dy / l);
    let base = (e.youngs / l).sqrt();
    let scaled = |r: [f64; 6], w: f64| r.map(|v| v * w);
    let mut out = vec![(1, scaled([-c, -s, 0.0, c, s, 0.0], base))];
    let b1 = [-2.0 * s / l, 2.0 * c / l, 1.0, 2.0 * s / l, -2.0 * c / l, 1.0];
    let b2 = [0.0, 0.0, 1.0, 0.0, 0.0, -1.0];
    for (i, &k) in e.law.coefficients().iter().enumerate() {
        if k > 0.0 {
            let w = base * k.sqrt();
            out.push((i + 1, scaled(b1, w * 3f64.sqrt())));
            out.push((i + 1, scaled(b2, w)));
        }
    }
    out
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Maps global `(ux, uy, rot)` pairs to local axes.
fn rotation(c: f64, s: f64) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(6, 6);
    for o in [0, 3] {
        t[(o, o)] = c;
        t[(o, o + 1)] = s;
        t[(o + 1, o)] = -s;
        t[(o + 1, o + 1)] = c;
        t[(o + 2, o + 2)] = 1.0;
    }
    t
}

fn local_axial(ea_over_l: f64) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(6, 6);
    k[(0, 0)] = ea_over_l;
    k[(3, 3)] = ea_over_l;
    k[(0, 3)] = -ea_over_l;
    k[(3, 0)] = -ea_over_l;
    k
}

/// Bending stiffness for unit inertia.
fn local_bending(e: f64, l: f64) -> DMatrix<f64> {
    let idx = [1, 2, 4, 5];
    let b = [
        [12.0, 6.0 * l, -12.0, 6.0 * l],
        [6.0 * l, 4.0 * l * l, -6.0 * l, 2.0 * l * l],
        [-12.0, -6.0 * l, 12.0, -6.0 * l],
        [6.0 * l, 2.0 * l * l, -6.0 * l, 4.0 * l * l],
    ];
    let f = e / (l * l * l);
    let mut k = DMatrix::zeros(6, 6);
    for (p, &ip) in idx.iter().enumerate() {
        for (q, &iq) in idx.iter().enumerate() {
            k[(ip, iq)] = f * b[p][q];
        }
    }
    k
}

/// Stiffness data after support elimination: `K(a) = K0 + sum_g sum_i K_g^(i) a_g^i`.
///
/// Supports are shared by all load cases, so the matrices are stored once and the
/// load-case index only selects forces and bounds.
#[derive(Clone, Debug)]
pub struct AssembledStiffness {
    n_dof: usize,
    k0: DMatrix<f64>,
    coeffs: Vec<[Option<DMatrix<f64>>; 3]>,
    /// Row factors with `K_g^(i) = F^T F`.
    factors: Vec<[Option<DMatrix<f64>>; 3]>,
    forces: Vec<DVector<f64>>,
    cbar: Vec<f64>,
    case_ids: Vec<String>,
    group_weights: Vec<f64>,
}

impl AssembledStiffness {
    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn n_vars(&self) -> usize {
        self.coeffs.len()
    }

    pub fn n_load_cases(&self) -> usize {
        self.forces.len()
    }

    pub fn k0(&self, _j: usize) -> &DMatrix<f64> {
        &self.k0
    }

    /// `K^(power)` of group `g`, `power` in 1..=3.
    pub fn coeff(&self, _j: usize, g: usize, power: usize) -> Option<&DMatrix<f64>> {
        self.coeffs[g][power - 1].as_ref()
    }

    /// Row factor `F` of `K_g^(power) = F^T F`.
    pub fn factor(&self, _j: usize, g: usize, power: usize) -> Option<&DMatrix<f64>> {
        self.factors[g][power - 1].as_ref()
    }

    pub fn force(&self, j: usize) -> &DVector<f64> {
        &self.forces[j]
    }

    pub fn cbar(&self, j: usize) -> f64 {
        self.cbar[j]
    }

    pub fn case_id(&self, j: usize) -> &str {
        &self.case_ids[j]
    }

    pub fn group_weights(&self) -> &[f64] {
        &self.group_weights
    }

    pub fn has_fixed_part(&self) -> bool {
        self.k0.iter().any(|v| *v != 0.0)
    }

    /// Highest power of any design variable.
    pub fn max_degree(&self) -> usize {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter().enumerate().filter(|(_, m)| m.is_some()).map(|(i, _)| i + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn weight(&self, a: &[f64]) -> f64 {
        weight(&self.group_weights, a)
    }

    /// Design-dependent part `sum_g sum_i K_g^(i) a_g^i`.
    pub fn design_part(&self, _j: usize, a: &[f64]) -> DMatrix<f64> {
        assert_eq!(a.len(), self.n_vars(), "one area per group");
        let mut k = DMatrix::zeros(self.n_dof, self.n_dof);
        for (g, c) in self.coeffs.iter().enumerate() {
            for (i, m) in c.iter().enumerate() {
                if let Some(m) = m {
                    k += m * a[g].powi(i as i32 + 1);
                }
            }
        }
        k
    }

    pub fn stiffness_at(&self, j: usize, a: &[f64]) -> DMatrix<f64> {
        self.design_part(j, a) + &self.k0
    }

    /// `dK/da_g = sum_i i a_g^(i-1) K_g^(i)`.
    pub fn derivative(&self, _j: usize, g: usize, a_g: f64) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.n_dof, self.n_dof);
        for (i, m) in self.coeffs[g].iter().enumerate() {
            if let Some(m) = m {
                k += m * ((i + 1) as f64 * a_g.powi(i as i32));
            }
        }
        k
    }

    /// `K_j(a)` as a matrix polynomial in the group areas.
    pub fn matrix_polynomial(&self, _j: usize) -> MatrixPolynomial {
        let n = self.n_vars();
        let mut p = MatrixPolynomial::zero(n, self.n_dof);
        p.add_term(MultiIndex::zero(n), &self.k0);
        for (g, c) in self.coeffs.iter().enumerate() {
            for (i, m) in c.iter().enumerate() {
                if let Some(m) = m {
                    let mut e = vec![0; n];
                    e[g] = i as u32 + 1;
                    p.add_term(MultiIndex::new(e), m);
                }
            }
        }
        p
    }
}
