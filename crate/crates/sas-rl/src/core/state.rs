/// Index of a state in a tabular environment.
pub type StateId = usize;

/// Environment state: either a tabular index or a real-valued vector.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Discrete(StateId),
    Continuous(Vec<f64>),
}

impl State {
    /// Tabular index of a discrete state. Panics on continuous states:
    /// callers that require an index are tabular-only code paths.
    pub fn index(&self) -> StateId {
        match self {
            State::Discrete(i) => *i,
            State::Continuous(_) => panic!("expected a discrete state, got a continuous one"),
        }
    }

    /// Coordinate view of a continuous state. Panics on discrete states.
    pub fn coords(&self) -> &[f64] {
        match self {
            State::Discrete(_) => panic!("expected a continuous state, got a discrete one"),
            State::Continuous(x) => x,
        }
    }
}

impl From<StateId> for State {
    fn from(i: StateId) -> Self {
        State::Discrete(i)
    }
}

impl From<Vec<f64>> for State {
    fn from(x: Vec<f64>) -> Self {
        State::Continuous(x)
    }
}
