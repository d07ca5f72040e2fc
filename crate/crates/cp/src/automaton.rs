//! Deterministic finite automata and transition cost tables for CostRegular.

use std::collections::VecDeque;

use crate::error::CpError;

/// A deterministic automaton over the symbols `1..=alphabet`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Automaton {
    states: usize,
    alphabet: usize,
    initial: usize,
    accepting: Vec<bool>,
    // delta[state * alphabet + (symbol - 1)]
    delta: Vec<Option<usize>>,
}

impl Automaton {
    /// Build an automaton from `(from, symbol, to)` transitions.
    ///
    /// Rejects nondeterministic transitions, out-of-range states or symbols,
    /// and states not reachable from `initial`.
    pub fn new(
        states: usize,
        alphabet: usize,
        initial: usize,
        accepting: &[usize],
        transitions: &[(usize, i64, usize)],
    ) -> Result<Self, CpError> {
        let bad = |msg: String| Err(CpError::InvalidAutomaton(msg));
        if states == 0 || alphabet == 0 {
            return bad("automaton needs at least one state and one symbol".into());
        }
        if initial >= states {
            return bad(format!("initial state {initial} out of range"));
        }
        let mut acc = vec![false; states];
        for &s in accepting {
            if s >= states {
                return bad(format!("accepting state {s} out of range"));
            }
            acc[s] = true;
        }
        let mut delta = vec![None; states * alphabet];
        for &(from, sym, to) in transitions {
            if from >= states || to >= states {
                return bad(format!("transition {from} -{sym}-> {to} uses an unknown state"));
            }
            if sym < 1 || sym as usize > alphabet {
                return bad(format!("symbol {sym} outside alphabet 1..={alphabet}"));
            }
            let slot = &mut delta[from * alphabet + sym as usize - 1];
            match *slot {
                Some(prev) if prev != to => {
                    return bad(format!("state {from} has two successors on symbol {sym}"));
                }
                _ => *slot = Some(to),
            }
        }
        let aut = Automaton {
            states,
            alphabet,
            initial,
            accepting: acc,
            delta,
        };
        let reach = aut.reachable();
        if let Some(s) = reach.iter().position(|r| !r) {
            return bad(format!("state {s} is unreachable from the initial state"));
        }
        Ok(aut)
    }

    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.states];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(s) = queue.pop_front() {
            for sym in 1..=self.alphabet as i64 {
                if let Some(t) = self.next(s, sym) {
                    if !seen[t] {
                        seen[t] = true;
                        queue.push_back(t);
                    }
                }
            }
        }
        seen
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accepting[state]
    }

    /// Successor of `state` on `symbol`, if the transition exists.
    pub fn next(&self, state: usize, symbol: i64) -> Option<usize> {
        if symbol < 1 || symbol as usize > self.alphabet {
            return None;
        }
        self.delta[state * self.alphabet + symbol as usize - 1]
    }

    /// Every defined transition as `(from, symbol, to)`.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, i64, usize)> + '_ {
        (0..self.states).flat_map(move |s| {
            (1..=self.alphabet as i64).filter_map(move |a| self.next(s, a).map(|t| (s, a, t)))
        })
    }

    /// Run the automaton over `word`. Returns the accumulated cost when the
    /// word is accepted.
    pub fn replay(&self, word: &[i64], costs: &CostMatrix) -> Option<i64> {
        let mut state = self.initial;
        let mut total = 0i64;
        for (pos, &sym) in word.iter().enumerate() {
            let next = self.next(state, sym)?;
            total += costs.get(pos, sym, state);
            state = next;
        }
        self.accepting[state].then_some(total)
    }
}

/// Nonnegative integer cost of reading `symbol` at `position` while in `state`.
///
/// Either shared by every position or given per position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostMatrix {
    alphabet: usize,
    states: usize,
    positions: Option<usize>,
    cost: Vec<i64>,
}

impl CostMatrix {
    /// All-zero costs shared by every position.
    pub fn zeros(alphabet: usize, states: usize) -> Self {
        CostMatrix {
            alphabet,
            states,
            positions: None,
            cost: vec![0; alphabet * states],
        }
    }

    /// Position-independent costs from `f(symbol, state)`.
    pub fn from_fn(
        alphabet: usize,
        states: usize,
        mut f: impl FnMut(i64, usize) -> i64,
    ) -> Result<Self, CpError> {
        let mut m = Self::zeros(alphabet, states);
        for state in 0..states {
            for sym in 1..=alphabet as i64 {
                m.set_shared(sym, state, f(sym, state))?;
            }
        }
        Ok(m)
    }

    /// Per-position costs from `f(position, symbol, state)`.
    pub fn per_position(
        positions: usize,
        alphabet: usize,
        states: usize,
        mut f: impl FnMut(usize, i64, usize) -> i64,
    ) -> Result<Self, CpError> {
        let mut cost = Vec::with_capacity(positions * alphabet * states);
        for pos in 0..positions {
            for state in 0..states {
                for sym in 1..=alphabet as i64 {
                    let c = f(pos, sym, state);
                    if c < 0 {
                        return Err(CpError::NegativeCost(c));
                    }
                    cost.push(c);
                }
            }
        }
        Ok(CostMatrix {
            alphabet,
            states,
            positions: Some(positions),
            cost,
        })
    }

    /// Set a position-independent entry.
    pub fn set_shared(&mut self, symbol: i64, state: usize, c: i64) -> Result<(), CpError> {
        if c < 0 {
            return Err(CpError::NegativeCost(c));
        }
        assert!(self.positions.is_none(), "per-position matrix");
        let i = state * self.alphabet + symbol as usize - 1;
        self.cost[i] = c;
        Ok(())
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// Number of positions covered, or `None` for a shared matrix.
    pub fn positions(&self) -> Option<usize> {
        self.positions
    }

    pub fn get(&self, position: usize, symbol: i64, state: usize) -> i64 {
        let layer = match self.positions {
            None => 0,
            Some(_) => position * self.alphabet * self.states,
        };
        self.cost[layer + state * self.alphabet + symbol as usize - 1]
    }

    pub fn max_entry(&self) -> i64 {
        self.cost.iter().copied().max().unwrap_or(0)
    }
}
