//! Fixtures shared by the benchmarks under `benches/`.

use nvch::{
    make_logistic_potentials, GChoice, Grid, InitPreset, LogisticParams, Scheme, SchemeState,
    SolverOptions,
};

/// Default potentials on a uniform grid with cosine initial data.
pub struct Fixture {
    pub grid: Grid,
    pub scheme: Scheme,
    pub state: SchemeState,
}

impl Fixture {
    /// `cells` per axis on the unit line (`dim = 1`) or unit square (`dim = 2`).
    pub fn new(dim: usize, cells: usize, tau: f64) -> Self {
        let grid = Grid::new(dim, &vec![cells; dim], &vec![1.0; dim]).expect("valid grid");
        let ps = make_logistic_potentials(LogisticParams::default(), GChoice::Identity)
            .expect("valid potentials");
        let (mu0, rho0) = InitPreset::default().fields(&grid).expect("valid preset");
        let state = SchemeState::initial(mu0, rho0, &ps).expect("interior data");
        let scheme = Scheme::new(ps, tau, SolverOptions::for_grid(&grid)).expect("admissible");
        Self {
            grid,
            scheme,
            state,
        }
    }
}
