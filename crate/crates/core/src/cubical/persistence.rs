//! Persistence pairs of a filtered cubical complex over Z/2.
//!
//! Cells are totally ordered by (value, dimension, grid index), which refines the
//! filtration and puts every face before its cofaces. Three passes cover dims 0..=2:
//!
//! * dimension 0: union-find over edges in filtration order (elder rule);
//! * dimension `top - 1`: union-find over top cells in reverse order on the dual
//!   graph, with one outer node standing for the outside of the grid box;
//! * dimension 1 of a 3D complex: column reduction of the squares over Z/2,
//!   with squares already paired to cubes cleared.
//!
//! The whole grid box takes part, infinite cells included, ordered last. A pair that
//! would die at an infinite cell is essential in the finite subcomplex.

use std::collections::HashMap;

use super::complex::FilteredCubicalComplex;
use super::diagram::{PersistenceDiagram, PersistencePair};

fn order_key(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

struct Forest {
    parent: Vec<u32>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }
}

/// Symmetric difference of two sorted index lists.
fn add_columns(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Persistence diagrams in dimensions 0, 1 and 2. Pairs with zero persistence are dropped;
/// essential classes have death `f64::INFINITY`.
pub fn compute_persistence(cx: &FilteredCubicalComplex) -> [PersistenceDiagram; 3] {
    let n = cx.len();
    assert!(n < u32::MAX as usize, "complex too large");
    let values = cx.values();
    let dims: Vec<u8> = (0..n).map(|c| cx.dim(c) as u8).collect();
    let mut keyed: Vec<(u64, u64)> = (0..n)
        .map(|c| (order_key(values[c]), (u64::from(dims[c]) << 40) | c as u64))
        .collect();
    keyed.sort_unstable();
    let order: Vec<u32> = keyed.iter().map(|&(_, k)| (k & ((1 << 40) - 1)) as u32).collect();
    drop(keyed);
    let mut rank = vec![0u32; n];
    for (r, &c) in order.iter().enumerate() {
        rank[c as usize] = r as u32;
    }

    let mut out = [0, 1, 2].map(PersistenceDiagram::empty);
    let mut push = |dim: usize, birth: f64, death: f64| {
        if birth < death && dim < 3 {
            out[dim].pairs.push(PersistencePair { dim, birth, death });
        }
    };

    // Dimension 0.
    let mut forest = Forest::new(n);
    let mut cycle_edge = vec![false; n];
    for &e in &order {
        let e = e as usize;
        if dims[e] != 1 || !values[e].is_finite() {
            continue;
        }
        let mut ends = cx.boundary(e);
        let (a, b) = (ends.next().unwrap() as u32, ends.next().unwrap() as u32);
        let (ra, rb) = (forest.find(a), forest.find(b));
        if ra == rb {
            cycle_edge[e] = true;
            continue;
        }
        let (elder, younger) = if rank[ra as usize] < rank[rb as usize] { (ra, rb) } else { (rb, ra) };
        push(0, values[younger as usize], values[e]);
        forest.parent[younger as usize] = elder;
    }
    for v in 0..n {
        if dims[v] == 0 && values[v].is_finite() && forest.find(v as u32) == v as u32 {
            push(0, values[v], f64::INFINITY);
        }
    }

    let top = cx.top_dim();
    if top < 2 {
        out.iter_mut().for_each(PersistenceDiagram::sort);
        return out;
    }

    // Dimension top-1 by duality.
    let shape = cx.shape();
    let strides = [1, shape[0], shape[0] * shape[1]];
    let outer = n as u32;
    let mut dual = Forest::new(n + 1);
    let birth_rank = |x: u32| if x == outer { u32::MAX } else { rank[x as usize] };
    let mut killed_by_top = vec![false; n];
    for &s in order.iter().rev() {
        let s = s as usize;
        if usize::from(dims[s]) != top - 1 {
            continue;
        }
        let c = cx.coords(s);
        let axis = (0..3).find(|&a| shape[a] > 1 && c[a] % 2 == 0).expect("facet has a free axis");
        let lo = if c[axis] > 0 { (s - strides[axis]) as u32 } else { outer };
        let hi = if c[axis] + 1 < shape[axis] { (s + strides[axis]) as u32 } else { outer };
        let (r1, r2) = (dual.find(lo), dual.find(hi));
        if r1 == r2 {
            continue;
        }
        // The elder component is the one whose oldest cell comes later in the filtration.
        let (elder, younger) = if birth_rank(r1) > birth_rank(r2) { (r1, r2) } else { (r2, r1) };
        killed_by_top[s] = true;
        if values[s].is_finite() {
            push(top - 1, values[s], values[younger as usize]);
        }
        dual.parent[younger as usize] = elder;
    }

    if top == 3 {
        // Dimension 1: reduce the boundary columns of the remaining finite squares.
        let mut pivots: HashMap<u32, usize> = HashMap::new();
        let mut columns: Vec<Vec<u32>> = Vec::new();
        for &sq in &order {
            let sq = sq as usize;
            if dims[sq] != 2 || !values[sq].is_finite() || killed_by_top[sq] {
                continue;
            }
            let mut col: Vec<u32> = cx.boundary(sq).map(|e| rank[e]).collect();
            col.sort_unstable();
            while let Some(&low) = col.last() {
                match pivots.get(&low) {
                    Some(&j) => col = add_columns(&col, &columns[j]),
                    None => break,
                }
            }
            if let Some(&low) = col.last() {
                push(1, values[order[low as usize] as usize], values[sq]);
                pivots.insert(low, columns.len());
                columns.push(col);
            }
        }
        for e in 0..n {
            if cycle_edge[e] && !pivots.contains_key(&rank[e]) {
                push(1, values[e], f64::INFINITY);
            }
        }
    }

    out.iter_mut().for_each(PersistenceDiagram::sort);
    out
}
