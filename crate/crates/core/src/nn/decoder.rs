use std::sync::Arc;

use crate::tensor::{Tape, TensorError, Var};

use super::ModelParams;

/// Logits `[P × (C+1)]` for drug pairs `(us[i], vs[i])`.
///
/// The MLP runs on both concatenation orders and the two outputs are
/// averaged, so swapping `u` and `v` yields identical logits. The first
/// layer is applied per node (`H·W1_top`, `H·W1_bottom`) and gathered per
/// pair, which equals `[h_u ‖ h_v]·W1` without materializing the concat.
pub fn decode_pairs(
    tape: &mut Tape,
    h_drug: Var,
    us: Arc<[usize]>,
    vs: Arc<[usize]>,
    params: &ModelParams,
    vars: &[Var],
) -> Result<Var, TensorError> {
    let dl = &params.layout().decoder;
    let d = params.dims().hidden;
    let top = tape.slice_rows(vars[dl.w1], 0, d)?;
    let bottom = tape.slice_rows(vars[dl.w1], d, 2 * d)?;
    let p_top = tape.matmul(h_drug, top)?;
    let p_bottom = tape.matmul(h_drug, bottom)?;
    let branch = |tape: &mut Tape, a: &Arc<[usize]>, b: &Arc<[usize]>| -> Result<Var, TensorError> {
        let x = tape.gather_rows(p_top, Arc::clone(a))?;
        let y = tape.gather_rows(p_bottom, Arc::clone(b))?;
        let z = tape.add(x, y)?;
        let z = tape.add_row(z, vars[dl.b1])?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, vars[dl.w2])?;
        let z = tape.add_row(z, vars[dl.b2])?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, vars[dl.w3])?;
        tape.add_row(z, vars[dl.b3])
    };
    let forward = branch(tape, &us, &vs)?;
    let backward = branch(tape, &vs, &us)?;
    let sum = tape.add(forward, backward)?;
    tape.scale(sum, 0.5)
}
