use super::{Dims, Family, ModelKind};

/// Number of edges of the circuit computing a model's score.
///
/// Counting convention: an input unit over the entity (or predicate)
/// vocabulary contributes one edge per vocabulary element, every product
/// unit contributes three edges (one per slot) and the output sum unit one
/// edge per product unit. The squared circuit has one input unit per pair of
/// original input units of a slot and one product unit per pair of original
/// product units.
///
/// Units per slot (subject, predicate, object) and product units:
///
/// | family  | inputs            | products      |
/// |---------|-------------------|---------------|
/// | CP      | d, d, d           | d             |
/// | ComplEx | 2d, 2d, 2d        | 4d            |
/// | RESCAL  | d, d², d          | d²            |
/// | TuckER  | d_e, d_r, d_e     | d_e²·d_r      |
pub fn circuit_size(family: Family, kind: ModelKind, dims: &Dims) -> u128 {
    let d = dims.rank as u128;
    let dr = dims.relation_rank as u128;
    let e = dims.entities as u128;
    let r = dims.relations as u128;
    let (ns, nr, no, products) = match family {
        Family::Cp => (d, d, d, d),
        Family::Complex => (2 * d, 2 * d, 2 * d, 4 * d),
        Family::Rescal => (d, d * d, d, d * d),
        Family::Tucker => (d, dr, d, d * d * dr),
    };
    let (ns, nr, no, products) = if kind == ModelKind::Squared {
        (ns * ns, nr * nr, no * no, products * products)
    } else {
        (ns, nr, no, products)
    };
    ns * e + nr * r + no * e + 3 * products + products
}
