use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use super::rate::BranchingRate;
use super::torus::{Configuration, Torus};
use crate::error::{Error, Result};
use crate::rng::ReplicateRng;
use crate::walk::WalkKernel;

/// Default guard on the number of events in one call to the event loop.
pub const DEFAULT_MAX_EVENTS: u64 = 100_000_000;
/// Default guard on the total event rate.
pub const DEFAULT_MAX_RATE: f64 = 1.0e9;
/// Default torus safety multiplier m in side >= 2 ceil(m sqrt(lambda_max T)) + 1.
pub const DEFAULT_SAFETY: f64 = 6.0;

/// How the starting configuration is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// i.i.d. Poisson(theta) counts.
    Poisson,
    /// A Poisson field evolved for `t_burn` (defaults to the torus side).
    Burnin { t_burn: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub kernel: WalkKernel,
    pub rate: BranchingRate,
    pub theta: f64,
    pub torus_side: usize,
    pub horizon: f64,
    pub seed: u64,
    pub init: InitSpec,
    pub record_grid: Vec<f64>,
    pub safety_multiplier: f64,
    pub max_events: u64,
    pub max_rate: f64,
}

impl SimParams {
    /// Poisson start, record grid {horizon}, and the smallest admissible torus.
    pub fn new(kernel: WalkKernel, rate: BranchingRate, theta: f64, horizon: f64) -> Result<Self> {
        let mut p = Self {
            kernel,
            rate,
            theta,
            torus_side: 3,
            horizon,
            seed: 0,
            init: InitSpec::Poisson,
            record_grid: vec![horizon],
            safety_multiplier: DEFAULT_SAFETY,
            max_events: DEFAULT_MAX_EVENTS,
            max_rate: DEFAULT_MAX_RATE,
        };
        p.fit_torus()?;
        Ok(p)
    }

    /// Burn-in duration in effect (zero for a Poisson start).
    pub fn t_burn(&self) -> f64 {
        match self.init {
            InitSpec::Poisson => 0.0,
            InitSpec::Burnin { t_burn } => t_burn.unwrap_or(self.torus_side as f64),
        }
    }

    /// Sets the torus side to the smallest admissible value. With the default
    /// burn-in (= side) this solves side = min_side(horizon + side) by iteration.
    pub fn fit_torus(&mut self) -> Result<()> {
        let m = self.safety_multiplier;
        let mut side = Torus::min_side(&self.kernel, self.horizon, m)?;
        if let InitSpec::Burnin { t_burn: Some(tb) } = self.init {
            side = Torus::min_side(&self.kernel, self.horizon + tb, m)?;
        } else if let InitSpec::Burnin { t_burn: None } = self.init {
            for _ in 0..200 {
                let next = Torus::min_side(&self.kernel, self.horizon + side as f64, m)?;
                if next <= side {
                    break;
                }
                side = next;
            }
        }
        self.torus_side = side;
        Ok(())
    }

    pub fn torus(&self) -> Result<Torus> {
        Torus::new(self.kernel.dim(), self.torus_side)
    }

    pub fn validate(&self) -> Result<()> {
        self.rate.validate()?;
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(Error::InvalidParams(format!("theta must be finite and >= 0, got {}", self.theta)));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::InvalidParams(format!("horizon must be finite and >= 0, got {}", self.horizon)));
        }
        if let InitSpec::Burnin { t_burn: Some(tb) } = self.init {
            if !(tb.is_finite() && tb >= 0.0) {
                return Err(Error::InvalidParams(format!("t_burn must be finite and >= 0, got {tb}")));
            }
        }
        if !(self.safety_multiplier > 0.0) {
            return Err(Error::InvalidParams("safety multiplier must be > 0".into()));
        }
        let need = Torus::min_side(&self.kernel, self.horizon + self.t_burn(), self.safety_multiplier)?;
        if self.torus_side < need {
            return Err(Error::InvalidParams(format!(
                "torus side {} is below the safety minimum {need}",
                self.torus_side
            )));
        }
        self.torus()?;
        if self.record_grid.windows(2).any(|w| !(w[0] < w[1]))
            || self.record_grid.iter().any(|&t| !(t >= 0.0 && t <= self.horizon))
        {
            return Err(Error::InvalidParams(
                "record grid must be strictly increasing within [0, horizon]".into(),
            ));
        }
        Ok(())
    }
}

/// Which transition fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Jump,
    Birth,
    Death,
}

/// A change of the origin count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginEvent {
    pub time: f64,
    /// `Jump` covers arrivals and departures alike.
    pub kind: EventKind,
    /// Count at the origin right after the event.
    pub count: u32,
}

/// Origin-site counters (births, deaths, exact time integrals).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounters {
    pub births_at_origin: u64,
    pub deaths_at_origin: u64,
    pub integrated_sigma_at_origin: f64,
    pub integrated_count_at_origin: f64,
}

/// Exact record of one run, sufficient to evaluate every origin observable
/// at any time in [0, horizon].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub horizon: f64,
    pub initial_origin: u32,
    pub initial_total: u64,
    pub origin_log: Vec<OriginEvent>,
    pub record_grid: Vec<f64>,
    /// Total particle count at each record time.
    pub totals_at_grid: Vec<u64>,
    pub final_total: u64,
    pub events: u64,
    /// Branch candidates rejected by thinning.
    pub rejected: u64,
    pub first_event: Option<EventKind>,
}

impl Trajectory {
    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::DomainError(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    /// xi_t(0).
    pub fn origin_count(&self, t: f64) -> Result<u32> {
        self.check_time(t)?;
        Ok(self
            .origin_log
            .iter()
            .take_while(|e| e.time <= t)
            .last()
            .map_or(self.initial_origin, |e| e.count))
    }

    /// int_0^t xi_s(0) ds, exact for the piecewise-constant path.
    pub fn occupation_integral(&self, t: f64) -> Result<f64> {
        Ok(self.counters(t, None)?.integrated_count_at_origin)
    }

    /// Occupation integrals at several increasing times in one pass.
    pub fn occupation_integrals(&self, times: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        let mut last = 0.0;
        let mut count = self.initial_origin as f64;
        let mut events = self.origin_log.iter().peekable();
        for &t in times {
            self.check_time(t)?;
            if t < last {
                return Err(Error::InvalidInput("times must be nondecreasing".into()));
            }
            while let Some(e) = events.next_if(|e| e.time <= t) {
                acc += count * (e.time - last);
                last = e.time;
                count = e.count as f64;
            }
            out.push(acc + count * (t - last));
        }
        Ok(out)
    }

    /// Counters on [0, t]; the sigma integral needs the branching rate.
    pub fn counters(&self, t: f64, rate: Option<&BranchingRate>) -> Result<EventCounters> {
        self.check_time(t)?;
        let mut c = EventCounters::default();
        let mut last = 0.0;
        let mut count = self.initial_origin;
        let sigma = |k: u32| rate.map_or(0.0, |r| r.sigma(k));
        for e in self.origin_log.iter().take_while(|e| e.time <= t) {
            c.integrated_count_at_origin += count as f64 * (e.time - last);
            c.integrated_sigma_at_origin += sigma(count) * (e.time - last);
            match e.kind {
                EventKind::Birth => c.births_at_origin += 1,
                EventKind::Death => c.deaths_at_origin += 1,
                EventKind::Jump => {}
            }
            last = e.time;
            count = e.count;
        }
        c.integrated_count_at_origin += count as f64 * (t - last);
        c.integrated_sigma_at_origin += sigma(count) * (t - last);
        Ok(c)
    }
}

/// Walker's alias table over the kernel offsets.
#[derive(Debug, Clone)]
struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        Self { prob, alias }
    }

    /// Maps a uniform `u` in [0, 1) to an index.
    #[inline]
    fn sample(&self, u: f64) -> usize {
        let v = u * self.prob.len() as f64;
        let i = (v as usize).min(self.prob.len() - 1);
        if v - (i as f64) < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

/// Reusable simulation state for one parameter set. Buffers are kept across
/// replicates so the event loop never allocates per replicate.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: SimParams,
    torus: Torus,
    degree: usize,
    neighbors: Vec<u32>,
    alias: AliasTable,
    p_jump: f64,
    inv_p_jump: f64,
    /// sigma(k) / (c2 k), the thinning acceptance, for small k.
    accept: Vec<f64>,
    c2: f64,
    counts: Vec<u32>,
    particles: Vec<u32>,
}

impl Simulator {
    pub fn new(params: SimParams) -> Result<Self> {
        params.validate()?;
        let torus = params.torus()?;
        let offsets: Vec<Vec<i64>> = params.kernel.jumps().iter().map(|j| j.offset.clone()).collect();
        let weights: Vec<f64> = params.kernel.jumps().iter().map(|j| j.prob).collect();
        let c2 = params.rate.linear_bound();
        let accept = (0..256u32)
            .map(|k| if k == 0 { 0.0 } else { params.rate.sigma(k) / (c2 * k as f64) })
            .collect();
        Ok(Self {
            neighbors: torus.neighbor_table(&offsets),
            degree: offsets.len(),
            alias: AliasTable::new(&weights),
            p_jump: 1.0 / (1.0 + c2),
            inv_p_jump: 1.0 + c2,
            accept,
            c2,
            counts: vec![0; torus.volume()],
            particles: Vec::new(),
            torus,
            params,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    fn clear(&mut self) {
        for &p in &self.particles {
            self.counts[p as usize] = 0;
        }
        self.particles.clear();
    }

    /// Fresh i.i.d. Poisson(theta) field: a Poisson(theta V) total placed uniformly.
    pub fn seed_poisson(&mut self, rng: &mut ReplicateRng) {
        self.clear();
        let mean = self.params.theta * self.torus.volume() as f64;
        let n = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(rng) as usize
        } else {
            0
        };
        let volume = self.torus.volume() as u32;
        self.particles.reserve(n);
        for _ in 0..n {
            let s = rng.random_range(0..volume);
            self.counts[s as usize] += 1;
            self.particles.push(s);
        }
    }

    /// Poisson field followed by `t_burn` of unobserved dynamics.
    pub fn seed_equilibrium(&mut self, rng: &mut ReplicateRng) -> Result<()> {
        self.seed_poisson(rng);
        let t_burn = self.params.t_burn();
        self.advance(t_burn, rng)
    }

    /// Draws the initial configuration prescribed by `params.init`.
    pub fn seed_initial(&mut self, rng: &mut ReplicateRng) -> Result<()> {
        match self.params.init {
            InitSpec::Poisson => {
                self.seed_poisson(rng);
                Ok(())
            }
            InitSpec::Burnin { .. } => self.seed_equilibrium(rng),
        }
    }

    pub fn load(&mut self, config: &Configuration) -> Result<()> {
        if config.torus() != self.torus {
            return Err(Error::InvalidParams("configuration lives on a different torus".into()));
        }
        self.clear();
        for (site, count) in config.iter() {
            self.counts[site] = count;
            for _ in 0..count {
                self.particles.push(site as u32);
            }
        }
        Ok(())
    }

    pub fn configuration(&self) -> Configuration {
        Configuration::from_dense(self.torus, &self.counts)
    }

    pub fn total(&self) -> u64 {
        self.particles.len() as u64
    }

    pub fn count_at(&self, site: usize) -> u32 {
        self.counts[site]
    }

    /// Sum over all sites of sigma(xi(x)) / volume.
    pub fn mean_site_sigma(&self) -> f64 {
        if self.params.rate.is_independent() {
            return self.params.rate.sigma(1) * self.particles.len() as f64 / self.torus.volume() as f64;
        }
        let s: f64 = self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| self.params.rate.sigma(c))
            .sum();
        s / self.torus.volume() as f64
    }

    /// Unobserved evolution for `duration`.
    pub fn advance(&mut self, duration: f64, rng: &mut ReplicateRng) -> Result<()> {
        self.evolve::<false>(duration, &[], rng).map(|_| ())
    }

    /// Observed run over [0, horizon] from the current configuration.
    pub fn run(&mut self, rng: &mut ReplicateRng) -> Result<Trajectory> {
        let horizon = self.params.horizon;
        let grid = self.params.record_grid.clone();
        self.evolve::<true>(horizon, &grid, rng)
    }

    #[inline]
    fn accept_prob(&self, k: u32) -> f64 {
        match self.accept.get(k as usize) {
            Some(&a) => a,
            None => self.params.rate.sigma(k) / (self.c2 * k as f64),
        }
    }

    fn evolve<const OBSERVE: bool>(
        &mut self,
        duration: f64,
        grid: &[f64],
        rng: &mut ReplicateRng,
    ) -> Result<Trajectory> {
        let independent = self.params.rate.is_independent();
        let per_particle = 1.0 + self.c2;
        let max_events = self.params.max_events;
        let max_rate = self.params.max_rate;
        let mut traj = Trajectory {
            horizon: duration,
            initial_origin: self.counts[0],
            initial_total: self.particles.len() as u64,
            origin_log: Vec::new(),
            record_grid: grid.to_vec(),
            totals_at_grid: Vec::with_capacity(grid.len()),
            final_total: 0,
            events: 0,
            rejected: 0,
            first_event: None,
        };
        let mut t = 0.0;
        let mut next_grid = 0;
        loop {
            let n = self.particles.len();
            if n == 0 {
                break;
            }
            let rate = n as f64 * per_particle;
            if rate > max_rate {
                return Err(Error::RateOverflow {
                    time: t,
                    detail: format!("total rate {rate:e} above cap {max_rate:e}"),
                });
            }
            if traj.events + traj.rejected >= max_events {
                return Err(Error::RateOverflow {
                    time: t,
                    detail: format!("more than {max_events} events"),
                });
            }
            let e: f64 = Exp1.sample(rng);
            t += e / rate;
            if t >= duration {
                break;
            }
            if OBSERVE {
                while next_grid < grid.len() && grid[next_grid] <= t {
                    traj.totals_at_grid.push(n as u64);
                    next_grid += 1;
                }
            }
            let i = uniform_index(rng, n);
            let x = self.particles[i] as usize;
            let u: f64 = rng.random();
            let kind;
            if u < self.p_jump {
                // u / p_jump is again uniform and picks the offset.
                let j = self.alias.sample(u * self.inv_p_jump);
                let y = self.neighbors[x * self.degree + j] as usize;
                self.counts[x] -= 1;
                self.counts[y] += 1;
                self.particles[i] = y as u32;
                kind = EventKind::Jump;
                if OBSERVE && (x == 0 || y == 0) && x != y {
                    traj.origin_log.push(OriginEvent {
                        time: t,
                        kind,
                        count: self.counts[0],
                    });
                }
            } else {
                if !independent {
                    let k = self.counts[x];
                    if rng.random::<f64>() >= self.accept_prob(k) {
                        traj.rejected += 1;
                        continue;
                    }
                }
                let w = (u - self.p_jump) / (1.0 - self.p_jump);
                if w < 0.5 {
                    self.counts[x] += 1;
                    self.particles.push(x as u32);
                    kind = EventKind::Birth;
                } else {
                    self.counts[x] -= 1;
                    self.particles.swap_remove(i);
                    kind = EventKind::Death;
                }
                if OBSERVE && x == 0 {
                    traj.origin_log.push(OriginEvent {
                        time: t,
                        kind,
                        count: self.counts[0],
                    });
                }
            }
            if traj.first_event.is_none() {
                traj.first_event = Some(kind);
            }
            traj.events += 1;
        }
        let n = self.particles.len() as u64;
        while traj.totals_at_grid.len() < grid.len() {
            traj.totals_at_grid.push(n);
        }
        traj.final_total = n;
        Ok(traj)
    }
}

/// Uniform index in 0..n by Lemire's widening multiply with rejection.
#[inline]
fn uniform_index(rng: &mut ReplicateRng, n: usize) -> usize {
    let n = n as u64;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        let low = m as u64;
        if low >= n || low >= n.wrapping_neg() % n {
            return (m >> 64) as usize;
        }
    }
}

/// Fresh Poisson(theta) configuration on the parameter torus.
pub fn init_poisson(params: &SimParams, rng: &mut ReplicateRng) -> Result<Configuration> {
    let mut sim = Simulator::new(params.clone())?;
    sim.seed_poisson(rng);
    Ok(sim.configuration())
}

/// Approximate equilibrium sample: a Poisson field evolved for the burn-in time.
pub fn init_equilibrium(params: &SimParams, rng: &mut ReplicateRng) -> Result<Configuration> {
    if params.kernel.dim() < 3 {
        return Err(Error::InvalidParams(format!(
            "equilibrium needs d >= 3, got d = {}",
            params.kernel.dim()
        )));
    }
    let mut sim = Simulator::new(params.clone())?;
    sim.seed_equilibrium(rng)?;
    Ok(sim.configuration())
}

/// Runs the dynamics from `config` to the horizon.
pub fn run(
    params: &SimParams,
    config: &Configuration,
    rng: &mut ReplicateRng,
) -> Result<(Trajectory, EventCounters)> {
    let mut sim = Simulator::new(params.clone())?;
    sim.load(config)?;
    let traj = sim.run(rng)?;
    let counters = traj.counters(traj.horizon, Some(&params.rate))?;
    Ok((traj, counters))
}
