//! The authoritative simulation loop. Network handlers talk to it only
//! through the inbox channel and per-client outboxes of serialized lines.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};
use log::{debug, warn};

use super::Session;
use crate::engine::Engine;

pub type ClientId = u64;

/// Per-tick processing budget.
pub const TICK_BUDGET: Duration = Duration::from_millis(15);

#[derive(Debug)]
pub enum Inbound {
    /// Registers a subscriber; replies and broadcasts go to `outbox`.
    Connect { client: ClientId, outbox: Sender<String> },
    /// One or more newline-delimited records from a client.
    Line { client: ClientId, line: String },
    Disconnect(ClientId),
    Shutdown,
}

/// Paces the loop. `wait` returns false when the loop should stop.
pub trait Ticker {
    fn wait(&mut self) -> bool;
}

/// Wall-clock pacing on the command grid. A late tick runs immediately;
/// ticks are never skipped.
#[derive(Debug)]
pub struct RealTimeTicker {
    start: Instant,
    ticks: u32,
}

impl RealTimeTicker {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            ticks: 0,
        }
    }
}

impl Default for RealTimeTicker {
    fn default() -> Self {
        Self::new()
    }
}

impl Ticker for RealTimeTicker {
    fn wait(&mut self) -> bool {
        self.ticks += 1;
        let deadline = self.start + Duration::from_secs_f64(Engine::dt()) * self.ticks;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
        true
    }
}

/// One tick per message received; stops when the sender is dropped.
#[derive(Debug)]
pub struct ManualTicker(pub Receiver<()>);

impl Ticker for ManualTicker {
    fn wait(&mut self) -> bool {
        self.0.recv().is_ok()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoopStats {
    pub ticks: u64,
    pub max_tick: Duration,
    pub over_budget: u64,
}

/// Runs ticks until the ticker stops or a shutdown arrives. Input errors
/// are answered to the sending client and never end the loop.
pub fn run_loop(session: &mut Session, inbox: &Receiver<Inbound>, ticker: &mut impl Ticker) -> LoopStats {
    let mut clients: BTreeMap<ClientId, Sender<String>> = BTreeMap::new();
    let mut stats = LoopStats::default();
    while ticker.wait() {
        let started = Instant::now();
        for msg in inbox.try_iter() {
            match msg {
                Inbound::Connect { client, outbox } => {
                    debug!("client {client} connected");
                    clients.insert(client, outbox);
                }
                Inbound::Disconnect(client) => {
                    debug!("client {client} disconnected");
                    clients.remove(&client);
                }
                Inbound::Line { client, line } => {
                    for record in line.lines().map(str::trim).filter(|l| !l.is_empty()) {
                        if let Err(e) = session.apply_line(record) {
                            debug!("client {client}: {e}");
                            if let Some(out) = clients.get(&client) {
                                let _ = out.send(e.to_message().to_line());
                            }
                        }
                    }
                }
                Inbound::Shutdown => return stats,
            }
        }
        let tick = session.tick();
        for msg in &tick.broadcast {
            let line = msg.to_line();
            clients.retain(|_, out| out.send(line.clone()).is_ok());
        }
        let elapsed = started.elapsed();
        stats.ticks += 1;
        stats.max_tick = stats.max_tick.max(elapsed);
        if elapsed > TICK_BUDGET {
            stats.over_budget += 1;
            warn!("tick {} took {elapsed:?}", tick.output.t);
        }
    }
    stats
}
