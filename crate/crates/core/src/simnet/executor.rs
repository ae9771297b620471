use super::engine::{Engine, TimelinePoint};
use super::scenario::SimScenario;
use crate::error::Result;
use crate::executor::{Executor, IntervalStats, TransferId, TransferSummary};
use crate::types::{Chunk, ParamTriple};

/// [`Executor`] backed by the simulator.
pub struct SimExecutor {
    engine: Engine,
}

impl SimExecutor {
    pub fn new(scenario: SimScenario, start: f64) -> Result<Self> {
        Ok(Self {
            engine: Engine::new(scenario, start)?,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn timeline(&self) -> &[TimelinePoint] {
        self.engine.timeline()
    }

    pub fn take_timeline(&mut self) -> Vec<TimelinePoint> {
        self.engine.take_timeline()
    }

    pub fn run_to_completion(&mut self) -> Result<()> {
        self.engine.run_to_completion()
    }
}

impl Executor for SimExecutor {
    fn now(&self) -> f64 {
        self.engine.now()
    }

    fn start(&mut self, chunk: &Chunk, params: ParamTriple) -> Result<TransferId> {
        self.engine.launch(chunk, params)
    }

    fn wait(&mut self, seconds: f64) -> Result<()> {
        self.engine.advance(seconds);
        Ok(())
    }

    fn wait_for(&mut self, id: TransferId, seconds: f64) -> Result<()> {
        let until = self.engine.now() + seconds - 1e-9;
        while self.engine.now() < until && self.engine.is_active(id) {
            self.engine.step();
        }
        Ok(())
    }

    fn wait_all(&mut self) -> Result<()> {
        self.engine.run_to_completion()
    }

    fn poll_interval(&mut self, id: TransferId) -> Result<IntervalStats> {
        self.engine.take_interval(id)
    }

    fn stop(&mut self, id: TransferId) -> Result<Option<Chunk>> {
        self.engine.stop(id)
    }

    fn reconfigure(&mut self, id: TransferId, params: ParamTriple) -> Result<f64> {
        self.engine.reconfigure(id, params)
    }

    fn is_active(&self, id: TransferId) -> bool {
        self.engine.is_active(id)
    }

    fn summary(&self, id: TransferId) -> Result<TransferSummary> {
        self.engine.summary(id)
    }

    fn active_flows(&self) -> u32 {
        self.engine.active_flows()
    }
}
