//! Finite-difference gradient checking.
//!
//! Analytic gradients from the tape are compared against central
//! differences (L(x+h) - L(x-h)) / 2h computed in f64. Checks reject
//! graphs that drew dropout masks: a stochastic loss surface makes the
//! comparison meaningless, so callers must build deterministic graphs.

use super::graph::{Graph, Value};
use super::Tensor;
use crate::error::{Error, Result};
use crate::sharing::ParameterTable;

/// Relative error between analytic and numeric derivative, guarded against
/// tiny denominators.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn reject_stochastic(g: &Graph<f64>) -> Result<()> {
    if g.is_stochastic() {
        return Err(Error::Numeric(
            "gradient check requires a deterministic graph; disable dropout".into(),
        ));
    }
    Ok(())
}

/// Check the gradient of a scalar loss with respect to one leaf tensor.
/// `make_graph` controls the graph mode (tests pass inference; handing in a
/// training-mode factory whose loss draws dropout is rejected). Returns the
/// maximum relative error over all coordinates.
pub fn grad_check_leaf<G, F>(x0: &Tensor<f64>, h: f64, make_graph: G, build: F) -> Result<f64>
where
    G: Fn() -> Graph<f64>,
    F: Fn(&mut Graph<f64>, Value) -> Result<Value>,
{
    let mut g = make_graph();
    let x = g.leaf(x0.clone());
    let loss = build(&mut g, x)?;
    reject_stochastic(&g)?;
    g.backward(loss)?;
    let analytic = g.grad(x).to_vec();

    let eval = |t: &Tensor<f64>| -> Result<f64> {
        let mut g = make_graph();
        let x = g.leaf(t.clone());
        let loss = build(&mut g, x)?;
        reject_stochastic(&g)?;
        Ok(g.value(loss).data()[0])
    };

    let mut worst = 0.0f64;
    for k in 0..x0.len() {
        let mut plus = x0.clone();
        plus.data_mut()[k] += h;
        let mut minus = x0.clone();
        minus.data_mut()[k] -= h;
        let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        worst = worst.max(rel_err(analytic[k], fd));
    }
    Ok(worst)
}

#[derive(Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_cell: String,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Check analytic gradients of every parameter cell in a table against
/// central differences. `build` must construct the full forward pass and
/// return (graph, scalar loss); it is re-invoked on perturbed copies of the
/// table, so it has to read parameters from the table it is given.
pub fn grad_check_params<F>(
    table: &ParameterTable<f64>,
    h: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ParameterTable<f64>) -> Result<(Graph<f64>, Value)>,
{
    let (mut g, loss) = build(table)?;
    reject_stochastic(&g)?;
    g.backward(loss)?;
    let mut analytic: Vec<Vec<f64>> =
        table.cells().iter().map(|c| vec![0.0; c.value.len()]).collect();
    for (cell, grad) in g.param_grads() {
        for (a, &d) in analytic[cell].iter_mut().zip(grad) {
            *a += d;
        }
    }

    let eval = |t: &ParameterTable<f64>| -> Result<f64> {
        let (g, loss) = build(t)?;
        reject_stochastic(&g)?;
        Ok(g.value(loss).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_cell: String::new(),
        worst_coord: 0,
        coords_checked: 0,
    };
    for (ci, cell) in table.cells().iter().enumerate() {
        for k in 0..cell.value.len() {
            let mut plus = table.clone();
            plus.cell_value_mut(ci).data_mut()[k] += h;
            let mut minus = table.clone();
            minus.cell_value_mut(ci).data_mut()[k] -= h;
            let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
            let err = rel_err(analytic[ci][k], fd);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_cell = cell.name.clone();
                report.worst_coord = k;
            }
        }
    }
    Ok(report)
}
