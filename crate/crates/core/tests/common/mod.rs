#![allow(dead_code)]

use framecert::{analysis, bounds};
use framecert::fem::{ElementSpec, FrameModel, LoadCaseSpec, LoadSpec, ModelFile, NodeSpec, SupportSpec};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct FrameSpec {
    pub n_groups: usize,
    /// Elements beyond the spanning tree.
    pub extra_elements: usize,
    /// Elements with a fixed area.
    pub fixed_elements: usize,
    pub load_cases: usize,
}

const LAWS: [&str; 3] = ["solid_square", "circular_tube", "i_section_10x10"];

/// Random connected frame, clamped at its first node. Each bound `cbar` lies
/// strictly between the infimum and the supremum of its compliance, so the
/// optimal weight is positive and some scaling of unit areas is feasible.
/// Frames whose loads bypass every designed element are redrawn.
pub fn random_frame(rng: &mut ChaCha8Rng, spec: &FrameSpec) -> FrameModel {
    loop {
        let m = candidate(rng, spec);
        let asm = m.assemble().unwrap();
        let s = bounds::scale_bisect(&asm, &vec![1.0; asm.n_vars()], bounds::DELTA_TOL).unwrap();
        if s.delta > 0.0 {
            return m;
        }
    }
}

fn candidate(rng: &mut ChaCha8Rng, spec: &FrameSpec) -> FrameModel {
    let n_tree = spec.n_groups + spec.fixed_elements;
    let n_nodes = (n_tree + 1).max(2);
    let mut cells: Vec<(i32, i32)> = (0..4).flat_map(|x| (0..3).map(move |y| (x, y))).collect();
    cells.shuffle(rng);
    let nodes: Vec<NodeSpec> = cells[..n_nodes]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| NodeSpec {
            id: i as u32 + 1,
            x: x as f64 + rng.gen_range(-0.2..0.2),
            y: y as f64 + rng.gen_range(-0.2..0.2),
            label: None,
        })
        .collect();
    let mut pairs: Vec<(u32, u32)> = (1..n_nodes).map(|i| (rng.gen_range(0..i) as u32, i as u32)).collect();
    let mut tries = 0;
    while pairs.len() < n_tree + spec.extra_elements && tries < 100 {
        tries += 1;
        let a = rng.gen_range(0..n_nodes) as u32;
        let b = rng.gen_range(0..n_nodes) as u32;
        let p = (a.min(b), a.max(b));
        if a != b && !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let mut roles: Vec<Option<usize>> = (0..pairs.len())
        .map(|k| {
            if k < spec.n_groups {
                Some(k)
            } else if k < n_tree {
                None
            } else {
                Some(rng.gen_range(0..spec.n_groups))
            }
        })
        .collect();
    roles.shuffle(rng);
    let elements: Vec<ElementSpec> = pairs
        .iter()
        .zip(&roles)
        .enumerate()
        .map(|(k, (&(a, b), role))| ElementSpec {
            id: k as u32 + 1,
            n1: a + 1,
            n2: b + 1,
            youngs: rng.gen_range(0.5..2.0),
            rho: rng.gen_range(0.5..2.0),
            law: LAWS[rng.gen_range(0..LAWS.len())].to_string(),
            group: role.map(|g| format!("g{}", g + 1)),
            area: if role.is_none() { Some(rng.gen_range(0.05..0.2)) } else { None },
        })
        .collect();
    let supports = vec![SupportSpec {
        node: 1,
        ux: true,
        uy: true,
        rot: true,
    }];
    let loadcases = (0..spec.load_cases)
        .map(|j| LoadCaseSpec {
            id: format!("{}", j + 1),
            cbar: 1.0,
            loads: vec![LoadSpec {
                node: rng.gen_range(2..=n_nodes as u32),
                fx: rng.gen_range(-1.0..1.0),
                fy: rng.gen_range(-1.0..1.0),
                m: 0.0,
            }],
        })
        .collect();
    let mut file = ModelFile {
        name: None,
        nodes,
        elements,
        laws: Default::default(),
        supports,
        loadcases,
        groups: Default::default(),
    };
    // group order g1, g2, ... regardless of element order
    for g in 0..spec.n_groups {
        let members = file
            .elements
            .iter()
            .filter(|e| e.group.as_deref() == Some(&format!("g{}", g + 1)))
            .map(|e| e.id)
            .collect();
        file.groups.insert(format!("g{}", g + 1), members);
    }
    let probe = FrameModel::from_spec(&file).expect("random frame is valid");
    let asm = probe.assemble().unwrap();
    let ones = vec![1.0; asm.n_vars()];
    for j in 0..asm.n_load_cases() {
        let c1 = analysis::compliance(&asm, j, &ones).unwrap();
        let part = analysis::partition(&asm, j, &ones);
        let inf = analysis::compliance_infimum(&part).unwrap();
        let sup = analysis::compliance_supremum(&part).unwrap().unwrap_or(f64::INFINITY);
        let reference = sup.min(3.0 * c1);
        file.loadcases[j].cbar = inf + rng.gen_range(0.2..0.9) * (reference - inf);
    }
    FrameModel::from_spec(&file).expect("random frame is valid")
}
