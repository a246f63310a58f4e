//! Incremental, per-scenario evaluation of operator trees.
//!
//! Each node caches its output path and the number of leading nodes that are
//! valid. `ensure(k)` extends the valid prefix through node `k`, pulling only
//! the input nodes the operator actually reads. `rewind(r)` declares that
//! input nodes `>= r` changed and drops exactly the cached outputs that
//! depend on them. Forward substitution in `fixpoint` relies on both.

use std::sync::Arc;

use super::{CoefArgs, CoefficientFn, OpKind, Operator};
use crate::error::{Error, Result};
use crate::pathspace::{DriverPath, PathEnsemble, TimeGrid};
use crate::projective::{clamp_node, interp_node, lag_interp_node, mollifier_weights, mollify_node, CompactBox};

const NEVER: usize = usize::MAX;

#[derive(Clone, Copy)]
pub(crate) struct Ctx<'a> {
    pub m: usize,
    pub input: &'a [f64],
    pub driver: Option<DriverPath<'a>>,
    pub grid: TimeGrid,
}

#[derive(Clone)]
struct Node {
    dim: usize,
    out: Vec<f64>,
    valid: usize,
    op: NodeOp,
}

#[derive(Clone)]
enum NodeOp {
    Input,
    Const,
    ScenarioConst(Arc<Vec<f64>>),
    Fixed(Arc<PathEnsemble>),
    Copy(Box<Node>),
    Sup(CoefficientFn, Box<Node>),
    Leb(Box<Node>),
    Ito(Option<usize>, Box<Node>),
    Clamp(Arc<CompactBox>, Box<Node>),
    Interp(usize, Box<Node>),
    LagInterp(usize, Box<Node>),
    /// Child is always an `Interp` node.
    Mollify(Arc<Vec<f64>>, Box<Node>),
    /// `fused` sums of constants and running integrals share one accumulator:
    /// `out[k] = out[k-1] + inc_1 + inc_2 + ...`.
    Sum { parts: Vec<Node>, fused: bool },
}

fn view<'s>(node: &'s Node, input: &'s [f64], k: usize) -> &'s [f64] {
    let d = node.dim;
    match node.op {
        NodeOp::Input => &input[k * d..(k + 1) * d],
        _ => &node.out[k * d..(k + 1) * d],
    }
}

fn whole<'s>(node: &'s Node, input: &'s [f64]) -> &'s [f64] {
    match node.op {
        NodeOp::Input => input,
        _ => &node.out,
    }
}

fn driver_increment<'a>(ctx: &Ctx<'a>, k: usize) -> &'a [f64] {
    ctx.driver
        .expect("driver presence is checked when the evaluator is built")
        .increment(k)
}

impl Node {
    fn computed(dim: usize, len: usize, op: NodeOp) -> Node {
        Node {
            dim,
            out: vec![0.0; len * dim],
            valid: 0,
            op,
        }
    }

    fn reset(&mut self, m: usize) -> Result<()> {
        let d = self.dim;
        match &mut self.op {
            NodeOp::Input | NodeOp::Const => return Ok(()),
            NodeOp::ScenarioConst(values) => {
                let row = values
                    .get(m * d..(m + 1) * d)
                    .ok_or_else(|| Error::shape(format!("no initial value for scenario {m}")))?;
                for chunk in self.out.chunks_mut(d) {
                    chunk.copy_from_slice(row);
                }
                self.valid = self.out.len() / d;
                return Ok(());
            }
            NodeOp::Fixed(x) => {
                if m >= x.scenarios() {
                    return Err(Error::shape(format!(
                        "fixed ensemble has {} scenarios, scenario {m} requested",
                        x.scenarios()
                    )));
                }
                self.out.copy_from_slice(x.path(m));
                self.valid = self.out.len() / d;
                return Ok(());
            }
            NodeOp::Copy(c)
            | NodeOp::Sup(_, c)
            | NodeOp::Leb(c)
            | NodeOp::Ito(_, c)
            | NodeOp::Clamp(_, c)
            | NodeOp::Interp(_, c)
            | NodeOp::LagInterp(_, c)
            | NodeOp::Mollify(_, c) => c.reset(m)?,
            NodeOp::Sum { parts, .. } => {
                for p in parts {
                    p.reset(m)?;
                }
            }
        }
        self.valid = 0;
        Ok(())
    }

    fn rewind(&mut self, r: usize, steps: usize) -> usize {
        let first = match &mut self.op {
            NodeOp::Input => return r,
            NodeOp::Const | NodeOp::ScenarioConst(_) | NodeOp::Fixed(_) => NEVER,
            NodeOp::Copy(c) | NodeOp::Sup(_, c) | NodeOp::Clamp(_, c) => c.rewind(r, steps),
            NodeOp::Leb(c) | NodeOp::Ito(_, c) | NodeOp::Mollify(_, c) => {
                c.rewind(r, steps).saturating_add(1)
            }
            NodeOp::Interp(block, c) => {
                let cr = c.rewind(r, steps);
                if cr > steps {
                    NEVER
                } else {
                    // Outputs change on the whole interval ending at the
                    // first anchor >= cr.
                    let anchor = cr.div_ceil(*block) * *block;
                    if anchor == 0 {
                        0
                    } else {
                        anchor - *block + 1
                    }
                }
            }
            NodeOp::LagInterp(block, c) => {
                let cr = c.rewind(r, steps);
                match cr {
                    0 => 0,
                    cr if cr > steps => NEVER,
                    // Input at anchor A is first read by node A + 1.
                    cr => cr.div_ceil(*block) * *block + 1,
                }
            }
            NodeOp::Sum { parts, .. } => parts
                .iter_mut()
                .map(|p| p.rewind(r, steps))
                .min()
                .unwrap_or(NEVER),
        };
        self.valid = self.valid.min(first);
        first
    }

    fn ensure(&mut self, upto: usize, ctx: &Ctx<'_>) -> Result<()> {
        if self.valid > upto {
            return Ok(());
        }
        let Node {
            dim,
            out,
            valid,
            op,
        } = self;
        let d = *dim;
        let start = *valid;
        match op {
            NodeOp::Input | NodeOp::Const | NodeOp::ScenarioConst(_) | NodeOp::Fixed(_) => {
                return Ok(())
            }
            NodeOp::Copy(c) => {
                c.ensure(upto, ctx)?;
                for k in start..=upto {
                    out[k * d..(k + 1) * d].copy_from_slice(view(c, ctx.input, k));
                }
            }
            NodeOp::Sup(f, c) => {
                c.ensure(upto, ctx)?;
                for k in start..=upto {
                    let args = CoefArgs {
                        scenario: ctx.m,
                        node: k,
                        time: ctx.grid.node(k),
                        state: view(c, ctx.input, k),
                        driver: ctx.driver.map(|w| w.prefix(k)),
                    };
                    let slot = &mut out[k * d..(k + 1) * d];
                    f.eval(&args, slot);
                    if slot.iter().any(|v| !v.is_finite()) {
                        return Err(Error::OperatorEvaluation {
                            scenario: ctx.m,
                            node: k,
                            reason: format!("coefficient `{}` returned a non-finite value", f.name()),
                        });
                    }
                }
            }
            NodeOp::Leb(c) => {
                if upto >= 1 {
                    c.ensure(upto - 1, ctx)?;
                }
                let dt = ctx.grid.dt();
                for k in start..=upto {
                    if k == 0 {
                        out[..d].fill(0.0);
                        continue;
                    }
                    let x = view(c, ctx.input, k - 1);
                    for i in 0..d {
                        out[k * d + i] = out[(k - 1) * d + i] + x[i] * dt;
                    }
                }
            }
            NodeOp::Ito(column, c) => {
                if upto >= 1 {
                    c.ensure(upto - 1, ctx)?;
                }
                for k in start..=upto {
                    if k == 0 {
                        out[..d].fill(0.0);
                        continue;
                    }
                    let x = view(c, ctx.input, k - 1);
                    let dw = driver_increment(ctx, k - 1);
                    for i in 0..d {
                        let w = dw[column.unwrap_or(i)];
                        out[k * d + i] = out[(k - 1) * d + i] + x[i] * w;
                    }
                }
            }
            NodeOp::Clamp(bx, c) => {
                c.ensure(upto, ctx)?;
                for k in start..=upto {
                    let range = k * d..(k + 1) * d;
                    clamp_node(
                        view(c, ctx.input, k),
                        &bx.lo()[range.clone()],
                        &bx.hi()[range.clone()],
                        &mut out[range],
                    );
                }
            }
            NodeOp::Interp(block, c) => {
                c.ensure(upto.div_ceil(*block) * *block, ctx)?;
                let src = whole(c, ctx.input);
                for k in start..=upto {
                    interp_node(src, d, *block, k, &mut out[k * d..(k + 1) * d]);
                }
            }
            NodeOp::LagInterp(block, c) => {
                let need = if upto < *block {
                    0
                } else if upto.is_multiple_of(*block) {
                    upto - *block
                } else {
                    upto / *block * *block
                };
                c.ensure(need, ctx)?;
                let src = whole(c, ctx.input);
                for k in start..=upto {
                    lag_interp_node(src, d, *block, k, &mut out[k * d..(k + 1) * d]);
                }
            }
            NodeOp::Mollify(weights, c) => {
                if upto >= 1 {
                    c.ensure(upto - 1, ctx)?;
                }
                let src = whole(c, ctx.input);
                for k in start..=upto {
                    mollify_node(src, d, weights, k, &mut out[k * d..(k + 1) * d]);
                }
            }
            NodeOp::Sum {
                parts,
                fused: false,
            } => {
                for p in parts.iter_mut() {
                    p.ensure(upto, ctx)?;
                }
                for k in start..=upto {
                    for i in 0..d {
                        let mut acc = view(&parts[0], ctx.input, k)[i];
                        for p in &parts[1..] {
                            acc += view(p, ctx.input, k)[i];
                        }
                        out[k * d + i] = acc;
                    }
                }
            }
            NodeOp::Sum { parts, fused: true } => {
                if upto >= 1 {
                    for p in parts.iter_mut() {
                        if let NodeOp::Leb(c) | NodeOp::Ito(_, c) = &mut p.op {
                            c.ensure(upto - 1, ctx)?;
                        }
                    }
                }
                let dt = ctx.grid.dt();
                for k in start..=upto {
                    for i in 0..d {
                        let mut acc;
                        if k == 0 {
                            acc = initial_value(&parts[0], i);
                            for p in &parts[1..] {
                                acc += initial_value(p, i);
                            }
                        } else {
                            acc = out[(k - 1) * d + i];
                            for p in parts.iter() {
                                match &p.op {
                                    NodeOp::Leb(c) => acc += view(c, ctx.input, k - 1)[i] * dt,
                                    NodeOp::Ito(column, c) => {
                                        let w = driver_increment(ctx, k - 1)[column.unwrap_or(i)];
                                        acc += view(c, ctx.input, k - 1)[i] * w;
                                    }
                                    _ => {}
                                }
                            }
                        }
                        out[k * d + i] = acc;
                    }
                }
            }
        }
        *valid = upto + 1;
        Ok(())
    }
}

fn initial_value(part: &Node, i: usize) -> f64 {
    match part.op {
        NodeOp::Const | NodeOp::ScenarioConst(_) => part.out[i],
        _ => 0.0,
    }
}

fn build(op: &Operator, child: Node, grid: &TimeGrid, driver_dim: Option<usize>) -> Result<Node> {
    let len = grid.len();
    let in_dim = child.dim;
    let node = match op.kind() {
        OpKind::Identity => child,
        OpKind::Constant(v) => {
            if v.is_empty() {
                return Err(Error::dim("constant operator with an empty state"));
            }
            Node {
                dim: v.len(),
                out: v.repeat(len),
                valid: len,
                op: NodeOp::Const,
            }
        }
        OpKind::ScenarioConstant { dim, values } => {
            Node::computed(*dim, len, NodeOp::ScenarioConst(values.clone()))
        }
        OpKind::Fixed(x) => {
            if x.grid() != grid {
                return Err(Error::shape("fixed ensemble lives on a different grid"));
            }
            Node::computed(x.dim(), len, NodeOp::Fixed(x.clone()))
        }
        OpKind::Superposition(f) => {
            if f.reads_driver() && driver_dim.is_none() {
                return Err(Error::InvalidArgument(format!(
                    "coefficient `{}` reads the driver but none was supplied",
                    f.name()
                )));
            }
            Node::computed(f.out_dim(in_dim), len, NodeOp::Sup(f.clone(), Box::new(child)))
        }
        OpKind::Lebesgue => Node::computed(in_dim, len, NodeOp::Leb(Box::new(child))),
        OpKind::Ito { column } => {
            op.output_dim(in_dim, driver_dim)?;
            Node::computed(in_dim, len, NodeOp::Ito(*column, Box::new(child)))
        }
        OpKind::Clamp(bx) => {
            bx.check_shape(grid, in_dim)?;
            Node::computed(in_dim, len, NodeOp::Clamp(bx.clone(), Box::new(child)))
        }
        OpKind::Interp(level) => {
            let block = level.block_len(grid)?;
            Node::computed(in_dim, len, NodeOp::Interp(block, Box::new(child)))
        }
        OpKind::CausalInterp(level) => {
            let block = level.block_len(grid)?;
            Node::computed(in_dim, len, NodeOp::LagInterp(block, Box::new(child)))
        }
        OpKind::Mollify(level) => {
            let block = level.block_len(grid)?;
            let inner = Node::computed(in_dim, len, NodeOp::Interp(block, Box::new(child)));
            Node::computed(
                in_dim,
                len,
                NodeOp::Mollify(Arc::new(mollifier_weights(block)), Box::new(inner)),
            )
        }
        OpKind::Composite(parts) => parts
            .iter()
            .try_fold(child, |c, p| build(p, c, grid, driver_dim))?,
        OpKind::Sum(parts) => {
            let nodes = parts
                .iter()
                .map(|p| build(p, child.clone(), grid, driver_dim))
                .collect::<Result<Vec<_>>>()?;
            let dim = nodes.first().ok_or_else(|| Error::dim("empty sum"))?.dim;
            if nodes.iter().any(|n| n.dim != dim) {
                return Err(Error::dim("sum parts disagree on dimension"));
            }
            let integral = |n: &Node| matches!(n.op, NodeOp::Leb(_) | NodeOp::Ito(..));
            let fused = nodes.iter().any(integral)
                && nodes.iter().all(|n| {
                    integral(n) || matches!(n.op, NodeOp::Const | NodeOp::ScenarioConst(_))
                });
            Node::computed(dim, len, NodeOp::Sum { parts: nodes, fused })
        }
        OpKind::Custom(map) => {
            return Err(Error::InvalidArgument(format!(
                "ensemble-level operator `{}` cannot be evaluated per scenario",
                map.name()
            )))
        }
    };
    Ok(node)
}

/// Per-scenario evaluator of a scenario-wise operator.
#[derive(Clone)]
pub(crate) struct Evaluator {
    root: Node,
    grid: TimeGrid,
}

impl Evaluator {
    pub fn new(op: &Operator, grid: TimeGrid, in_dim: usize, driver_dim: Option<usize>) -> Result<Self> {
        let input = Node {
            dim: in_dim,
            out: Vec::new(),
            valid: NEVER,
            op: NodeOp::Input,
        };
        let mut root = build(op, input, &grid, driver_dim)?;
        if matches!(root.op, NodeOp::Input) {
            root = Node::computed(in_dim, grid.len(), NodeOp::Copy(Box::new(root)));
        }
        Ok(Evaluator { root, grid })
    }

    pub fn out_dim(&self) -> usize {
        self.root.dim
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn reset(&mut self, m: usize) -> Result<()> {
        self.root.reset(m)
    }

    pub fn ensure(&mut self, upto: usize, ctx: &Ctx<'_>) -> Result<()> {
        self.root.ensure(upto, ctx)
    }

    /// Input nodes `>= r` changed; returns the first output node invalidated.
    pub fn rewind(&mut self, r: usize) -> usize {
        self.root.rewind(r, self.grid.steps())
    }

    pub fn output(&self) -> &[f64] {
        &self.root.out
    }

    pub fn node_output(&self, k: usize) -> &[f64] {
        let d = self.root.dim;
        &self.root.out[k * d..(k + 1) * d]
    }

    /// Full evaluation of scenario `m`.
    pub fn run(&mut self, m: usize, input: &[f64], driver: Option<DriverPath<'_>>) -> Result<()> {
        self.reset(m)?;
        let ctx = Ctx {
            m,
            input,
            driver,
            grid: self.grid,
        };
        self.ensure(self.grid.steps(), &ctx)?;
        check_finite(m, self.root.dim, &self.root.out)
    }
}

pub(crate) fn check_finite(m: usize, dim: usize, path: &[f64]) -> Result<()> {
    if let Some(pos) = path.iter().position(|v| !v.is_finite()) {
        return Err(Error::OperatorEvaluation {
            scenario: m,
            node: pos / dim,
            reason: "non-finite output".into(),
        });
    }
    Ok(())
}
