use serde::{Deserialize, Serialize};

/// One occupancy of a slot, from dispatch until completion or abort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusyInterval {
    pub slot: usize,
    pub start: f64,
    pub end: f64,
    pub tu: usize,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTimeline {
    pub node: String,
    pub slots: u32,
    pub intervals: Vec<BusyInterval>,
}

impl NodeTimeline {
    pub fn busy_time(&self) -> f64 {
        self.intervals.iter().map(|i| i.end - i.start).sum()
    }
}

/// Slot time split by what the slot was waiting on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub network: f64,
    pub compute: f64,
    pub scheduling: f64,
}

impl Breakdown {
    pub fn sum(&self) -> f64 {
        self.network + self.compute + self.scheduling
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    /// Minutes until the last unit finished.
    pub makespan: f64,
    pub timelines: Vec<NodeTimeline>,
    /// Fractions of `totals`; they sum to 1.
    pub breakdown: Breakdown,
    /// Slot-minutes spent per phase.
    pub totals: Breakdown,
    pub dispatches: usize,
    pub requeues: usize,
    pub cache_hits: usize,
    pub stops: usize,
    pub node_losses: usize,
    pub failed_tasks: usize,
    /// Nominal work of completed compiles, in speed-1 minutes.
    pub compute_work: f64,
    /// Nominal work thrown away by stops and node losses.
    pub discarded_work: f64,
    pub max_task_duration: f64,
    pub events: u64,
}

impl Report {
    pub(crate) fn empty(scenario: &str) -> Self {
        Report {
            scenario: scenario.to_owned(),
            makespan: 0.0,
            timelines: Vec::new(),
            breakdown: Breakdown::default(),
            totals: Breakdown::default(),
            dispatches: 0,
            requeues: 0,
            cache_hits: 0,
            stops: 0,
            node_losses: 0,
            failed_tasks: 0,
            compute_work: 0.0,
            discarded_work: 0.0,
            max_task_duration: 0.0,
            events: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }
}

/// One CSV line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scenario_id: String,
    pub axis_value: String,
    pub makespan_min: f64,
    pub network_frac: f64,
    pub compute_frac: f64,
    pub sched_frac: f64,
    pub requeues: usize,
    pub cache_hits: usize,
}

impl CsvRow {
    pub fn new(scenario_id: &str, axis_value: &str, r: &Report) -> Self {
        CsvRow {
            scenario_id: scenario_id.to_owned(),
            axis_value: axis_value.to_owned(),
            makespan_min: r.makespan,
            network_frac: r.breakdown.network,
            compute_frac: r.breakdown.compute,
            sched_frac: r.breakdown.scheduling,
            requeues: r.requeues,
            cache_hits: r.cache_hits,
        }
    }
}

pub fn write_csv<W: std::io::Write>(out: W, rows: &[CsvRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[CsvRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}
