//! Scalar reverse-mode automatic differentiation.
//!
//! Each operation appends a node holding up to two `(parent, local partial)`
//! pairs; [`Var::backward`] sweeps the tape once in reverse.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug)]
struct Node {
    parents: [(usize, f64); 2],
    arity: u8,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A leaf variable (parameter or input).
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, [(0, 0.0); 2], 0)
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: f64, parents: [(usize, f64); 2], arity: u8) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, arity });
        Var {
            tape: self,
            index: nodes.len() - 1,
            value,
        }
    }
}

/// Adjoints of every node on the tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: &Var) -> f64 {
        self.adjoints[v.index]
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    fn unary(&self, value: f64, partial: f64) -> Var<'t> {
        self.tape.push(value, [(self.index, partial), (0, 0.0)], 1)
    }

    fn binary(&self, other: &Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "variables from different tapes");
        self.tape.push(value, [(self.index, da), (other.index, db)], 2)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(self.value.cos(), -self.value.sin())
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.unary(self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }

    /// Subgradient 0 at the origin.
    pub fn abs(self) -> Var<'t> {
        let d = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.value.abs(), d)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(self.value.max(0.0), if self.value > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(self) -> Var<'t> {
        let s = crate::fields::sigmoid(self.value);
        self.unary(s, s * (1.0 - s))
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(crate::fields::softplus(self.value), crate::fields::sigmoid(self.value))
    }

    pub fn backward(&self) -> Gradients {
        let nodes = self.tape.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        adjoints[self.index] = 1.0;
        for i in (0..=self.index).rev() {
            let g = adjoints[i];
            if g == 0.0 {
                continue;
            }
            let node = nodes[i];
            for &(p, d) in &node.parents[..node.arity as usize] {
                adjoints[p] += g * d;
            }
        }
        Gradients { adjoints }
    }
}

/// Gradient of `loss` with respect to each of `params`; parameters the loss
/// does not depend on get 0.
pub fn backward(loss: &Var, params: &[Var]) -> Vec<f64> {
    let g = loss.backward();
    params.iter().map(|p| g.wrt(p)).collect()
}

pub fn sum<'t>(tape: &'t Tape, vars: impl IntoIterator<Item = Var<'t>>) -> Var<'t> {
    vars.into_iter().fold(tape.var(0.0), |acc, v| acc + v)
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(&o, self.value + o.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(&o, self.value - o.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(&o, self.value * o.value, o.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let inv = 1.0 / o.value;
        self.binary(&o, self.value * inv, inv, -self.value * inv * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.value + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.value - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.value * c, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let tape = Tape::new();
        let p = tape.vars(&[1.0, -2.0, 0.5]);
        let loss = sum(&tape, p.iter().map(|v| *v * *v));
        assert_eq!(backward(&loss, &p), vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn disconnected_parameter_has_zero_gradient() {
        let tape = Tape::new();
        let p = tape.vars(&[1.0, 3.0]);
        let loss = p[0].exp();
        let g = backward(&loss, &p);
        assert_eq!(g[1], 0.0);
        assert!((g[0] - 1f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn gradient_is_linear_in_the_loss() {
        let tape = Tape::new();
        let p = tape.vars(&[0.3, -0.7, 1.2]);
        let l1 = (p[0] * p[1]).sin() + p[2].softplus();
        let l2 = (p[0] - p[2]).powi(3) + p[1].sigmoid() * p[0];
        let (a, b) = (2.5, -0.75);
        let combo = l1 * a + l2 * b;
        let g1 = backward(&l1, &p);
        let g2 = backward(&l2, &p);
        let gc = backward(&combo, &p);
        for i in 0..3 {
            assert!((gc[i] - (a * g1[i] + b * g2[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn elementary_derivatives() {
        let tape = Tape::new();
        let x = tape.var(0.7);
        let cases: Vec<(Var, f64)> = vec![
            (x.ln(), 1.0 / 0.7),
            (x.cos(), -(0.7f64).sin()),
            (x / tape.var(2.0), 0.5),
            (-x, -1.0),
            ((x - 1.0).abs(), -1.0),
            ((x - 0.7).abs(), 0.0),
            ((x - 1.0).relu(), 0.0),
        ];
        for (v, d) in cases {
            assert!((v.backward().wrt(&x) - d).abs() < 1e-14);
        }
    }
}
