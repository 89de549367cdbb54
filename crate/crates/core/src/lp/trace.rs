use std::io::Write;

use super::{Basis, StandardLp};

#[derive(Debug, Clone, Copy)]
pub struct PivotEvent<'a> {
    pub phase: &'a str,
    pub lp: &'a StandardLp,
    pub basis: &'a Basis,
    pub entering: usize,
    pub leaving_column: usize,
    pub theta: f64,
}

/// Called after every pivot.
pub trait PivotObserver {
    fn on_pivot(&mut self, event: &PivotEvent<'_>);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoTrace;

impl PivotObserver for NoTrace {
    fn on_pivot(&mut self, _: &PivotEvent<'_>) {}
}

/// Line-delimited pivot dump. The program `(A, b, c)` is written once per
/// distinct phase tag, each pivot writes the basis and the full solution.
pub struct TextTrace<W: Write> {
    out: W,
    last_phase: Option<String>,
    count: usize,
}

impl<W: Write> TextTrace<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            last_phase: None,
            count: 0,
        }
    }

    pub fn pivots(&self) -> usize {
        self.count
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn join<'a>(it: impl Iterator<Item = &'a f64>) -> String {
    it.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
}

impl<W: Write> PivotObserver for TextTrace<W> {
    fn on_pivot(&mut self, e: &PivotEvent<'_>) {
        // trace output is best effort; a failing sink must not abort a solve
        if self.last_phase.as_deref() != Some(e.phase) {
            let rows: Vec<String> = e.lp.a().row_iter().map(|r| join(r.iter())).collect();
            let _ = writeln!(
                self.out,
                "lp phase={} rows={} cols={} A=[{}] b=[{}] c=[{}]",
                e.phase,
                e.lp.rows(),
                e.lp.cols(),
                rows.join(";"),
                join(e.lp.b().iter()),
                join(e.lp.c().iter()),
            );
            self.last_phase = Some(e.phase.to_string());
        }
        self.count += 1;
        let basis: Vec<String> = e.basis.indices().iter().map(|j| j.to_string()).collect();
        let z = e.basis.solution(e.lp.cols());
        let _ = writeln!(
            self.out,
            "pivot phase={} n={} enter={} leave={} theta={:e} B=[{}] z=[{}]",
            e.phase,
            self.count,
            e.entering,
            e.leaving_column,
            e.theta,
            basis.join(","),
            join(z.iter()),
        );
    }
}
