//! Truncated multivariate Taylor polynomials (forward-mode derivatives to order 4).

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

pub const ORDER: usize = 4;
const MAX_DIM: usize = 4;

struct Tables {
    monomials: Vec<Vec<usize>>,
    /// for each output monomial, the (left, right) pairs that multiply into it
    products: Vec<Vec<(usize, usize)>>,
}

fn tables(d: usize) -> &'static Tables {
    static CACHE: [OnceLock<Tables>; MAX_DIM + 1] = [const { OnceLock::new() }; MAX_DIM + 1];
    assert!((1..=MAX_DIM).contains(&d), "jets support 1 to {MAX_DIM} variables");
    CACHE[d].get_or_init(|| {
        let mut monomials = vec![vec![0; d]];
        for deg in 1..=ORDER {
            let mut level: Vec<Vec<usize>> = Vec::new();
            enumerate(d, deg, &mut vec![0; d], 0, &mut level);
            monomials.extend(level);
        }
        let index = |m: &[usize]| monomials.iter().position(|v| v == m);
        let products = monomials
            .iter()
            .map(|a| {
                let mut pairs = Vec::new();
                for (i, b) in monomials.iter().enumerate() {
                    if b.iter().zip(a).all(|(x, y)| x <= y) {
                        let c: Vec<usize> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                        if let Some(j) = index(&c) {
                            pairs.push((i, j));
                        }
                    }
                }
                pairs
            })
            .collect();
        Tables { monomials, products }
    })
}

fn enumerate(d: usize, left: usize, cur: &mut Vec<usize>, pos: usize, out: &mut Vec<Vec<usize>>) {
    if pos == d - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        enumerate(d, left - k, cur, pos + 1, out);
    }
}

/// f(x₀ + h) as Σ c_α h^α over |α| ≤ 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    d: usize,
    c: Vec<f64>,
}

impl Jet {
    pub fn constant(d: usize, v: f64) -> Jet {
        let mut c = vec![0.0; tables(d).monomials.len()];
        c[0] = v;
        Jet { d, c }
    }

    /// The seeded independent variables at x₀.
    pub fn variables(x: &[f64]) -> Vec<Jet> {
        let d = x.len();
        (0..d)
            .map(|j| {
                let mut v = Jet::constant(d, x[j]);
                v.c[1 + j] = 1.0;
                v
            })
            .collect()
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// ∂^α f at x₀.
    pub fn partial(&self, orders: &[usize]) -> f64 {
        let t = tables(self.d);
        match t.monomials.iter().position(|m| m == orders) {
            Some(i) => self.c[i] * orders.iter().map(|&k| factorial(k)).product::<f64>(),
            None => 0.0,
        }
    }

    /// g(f) from g and its first four derivatives at f(x₀).
    pub fn compose(&self, g: [f64; ORDER + 1]) -> Jet {
        let mut h = self.clone();
        h.c[0] = 0.0;
        let mut out = Jet::constant(self.d, g[0]);
        let mut pow = Jet::constant(self.d, 1.0);
        for (k, gk) in g.iter().enumerate().skip(1) {
            pow = &pow * &h;
            let s = gk / factorial(k);
            for (o, p) in out.c.iter_mut().zip(&pow.c) {
                *o += s * p;
            }
        }
        out
    }

    pub fn ln(&self) -> Jet {
        let a = self.value();
        self.compose([a.ln(), 1.0 / a, -1.0 / (a * a), 2.0 / a.powi(3), -6.0 / a.powi(4)])
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose([e; 5])
    }

    pub fn powf(&self, p: f64) -> Jet {
        let a = self.value();
        let mut g = [0.0; 5];
        let mut coef = 1.0;
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = coef * a.powf(p - k as f64);
            coef *= p - k as f64;
        }
        self.compose(g)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Jet {
        self.powf(-1.0)
    }

    pub fn square(&self) -> Jet {
        self * self
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Jet {
        Jet { d: self.d, c: self.c.iter().map(|&v| f(v)).collect() }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).product::<usize>() as f64
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        Jet { d: self.d, c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        Jet { d: self.d, c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let t = tables(self.d);
        let c = t.products.iter().map(|pairs| pairs.iter().map(|&(i, j)| self.c[i] * o.c[j]).sum()).collect();
        Jet { d: self.d, c }
    }
}

impl Div<&Jet> for &Jet {
    type Output = Jet;
    fn div(self, o: &Jet) -> Jet {
        self * &o.recip()
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.map(|v| -v)
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, s: f64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }
}

impl Sub<f64> for &Jet {
    type Output = Jet;
    fn sub(self, s: f64) -> Jet {
        self + (-s)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.map(|v| v * s)
    }
}

macro_rules! owned {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                (&self).$m(&o)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, o: &Jet) -> Jet {
                (&self).$m(o)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                self.$m(&o)
            }
        }
        impl $tr<f64> for Jet {
            type Output = Jet;
            fn $m(self, s: f64) -> Jet {
                (&self).$m(s)
            }
        }
    };
}
owned!(Add, add);
owned!(Sub, sub);
owned!(Mul, mul);

impl Div<Jet> for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        &self / &o
    }
}

impl Div<Jet> for &Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self / &o
    }
}

impl Div<&Jet> for Jet {
    type Output = Jet;
    fn div(self, o: &Jet) -> Jet {
        &self / o
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}
