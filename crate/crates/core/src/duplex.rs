//! Two-node blink-and-pulse protocol over a pair of electrolyte channels.
//!
//! Each node runs a 12-step LED sequence. In connected mode the nodes take
//! turns: a node blinks, sends one serial byte to its peer, then waits for
//! the peer's byte before blinking again. A node that hears nothing for
//! `peer_timeout` falls back to autonomous mode and blinks on its own.
//!
//! Time is kept in integer nanoseconds so event ordering is exact.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::calibration::Calibration;
use crate::channel::ChannelSpec;
use crate::error::{invalid, Result};
use crate::link::{default_sample_rate, run_link, FrontEnd, LinkConfig, Medium, UartConfig};

pub type Nanos = u64;

pub const PULSE_BYTE: u8 = 0xA5;
pub const DEFAULT_BAUD: u32 = 9_600;
pub const DEFAULT_CHANNEL_LENGTH: f64 = 1.0;
pub const DEFAULT_BLINK_STEP: f64 = 0.1;
pub const DEFAULT_SEQUENCE_LEN: u32 = 12;

pub fn secs_to_nanos(secs: f64) -> Result<Nanos> {
    if !(secs >= 0.0 && secs.is_finite()) {
        return Err(invalid(format!("time must be finite and >= 0, got {secs}")));
    }
    Ok((secs * 1e9).round() as Nanos)
}

pub fn nanos_to_secs(ns: Nanos) -> f64 {
    ns as f64 * 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Left,
    Right,
}

impl NodeId {
    pub const ALL: [NodeId; 2] = [NodeId::Left, NodeId::Right];

    pub fn peer(self) -> Self {
        match self {
            NodeId::Left => NodeId::Right,
            NodeId::Right => NodeId::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeId::Left => "left",
            NodeId::Right => "right",
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Connected,
    Autonomous,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub id: NodeId,
    pub mode: Mode,
    pub powered: bool,
    pub blinking: bool,
    pub blink_sequence_len: u32,
    /// Index of the lit LED while blinking.
    pub blink_step: u32,
    pub last_rx: Option<Nanos>,
    pub awaiting_peer: bool,
    /// Start of the current wait. The serial port only listens while
    /// waiting, so a frame whose start bit came earlier is missed.
    pub awaiting_since: Option<Nanos>,
    pub powered_at: Option<Nanos>,
    /// When the running blink sequence expects its next tick.
    pub next_tick: Option<Nanos>,
}

impl NodeState {
    pub fn off(id: NodeId, blink_sequence_len: u32) -> Self {
        Self {
            id,
            mode: Mode::Connected,
            powered: false,
            blinking: false,
            blink_sequence_len,
            blink_step: 0,
            last_rx: None,
            awaiting_peer: false,
            awaiting_since: None,
            powered_at: None,
            next_tick: None,
        }
    }

    /// Liveness is measured from the last pulse, or from power-on if none
    /// has arrived yet.
    fn liveness_origin(&self) -> Option<Nanos> {
        self.last_rx.or(self.powered_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeEvent {
    Tick,
    PulseReceived,
    PowerOff,
    PowerOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    PowerOn,
    PowerOff,
    BlinkStart,
    BlinkEnd,
    PulseSent,
    PulseReceived,
    ModeSwitch,
    ChannelSevered,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::PowerOn => "power_on",
            TraceEvent::PowerOff => "power_off",
            TraceEvent::BlinkStart => "blink_start",
            TraceEvent::BlinkEnd => "blink_end",
            TraceEvent::PulseSent => "pulse_sent",
            TraceEvent::PulseReceived => "pulse_received",
            TraceEvent::ModeSwitch => "mode_switch",
            TraceEvent::ChannelSevered => "channel_severed",
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Record(TraceEvent),
    /// Transmit one pulse byte to the peer.
    SendPulse,
    /// Deliver a [`NodeEvent::Tick`] at the given time.
    WakeAt(Nanos),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuplexConfig {
    pub baud: u32,
    pub channel_lr: ChannelSpec,
    pub channel_rl: ChannelSpec,
    /// Seconds.
    pub peer_timeout: f64,
    /// Seconds per LED.
    pub blink_step: f64,
    pub blink_sequence_len: u32,
    /// Let an autonomous node return to connected mode when a pulse arrives.
    pub rejoin: bool,
    pub front_end: FrontEnd,
}

impl DuplexConfig {
    pub fn from_calibration(cal: &Calibration) -> Result<Self> {
        let channel = ChannelSpec::calibrated(DEFAULT_CHANNEL_LENGTH, cal)?;
        let sequence = DEFAULT_BLINK_STEP * f64::from(DEFAULT_SEQUENCE_LEN);
        Ok(Self {
            baud: DEFAULT_BAUD,
            channel_lr: channel.clone(),
            channel_rl: channel,
            peer_timeout: 3.0 * sequence,
            blink_step: DEFAULT_BLINK_STEP,
            blink_sequence_len: DEFAULT_SEQUENCE_LEN,
            rejoin: true,
            front_end: FrontEnd::from_calibration(cal),
        })
    }

    pub fn blink_sequence_duration(&self) -> f64 {
        self.blink_step * f64::from(self.blink_sequence_len)
    }

    pub fn validate(&self) -> Result<()> {
        UartConfig::new(self.baud).validate()?;
        self.channel_lr.validate()?;
        self.channel_rl.validate()?;
        if self.blink_sequence_len == 0 {
            return Err(invalid("blink sequence needs at least one step"));
        }
        if secs_to_nanos(self.blink_step)? == 0 {
            return Err(invalid("blink step must be at least 1 ns"));
        }
        if !(self.peer_timeout > self.blink_sequence_duration()) || !self.peer_timeout.is_finite() {
            return Err(invalid(
                "peer timeout must be finite and longer than one blink sequence",
            ));
        }
        Ok(())
    }

    /// Time on the wire for one 8N1 frame.
    pub fn pulse_latency(&self) -> Nanos {
        (10.0e9 / f64::from(self.baud)).round() as Nanos
    }

    /// Link used by `from` to reach its peer.
    pub fn link(&self, from: NodeId) -> LinkConfig {
        let spec = match from {
            NodeId::Left => self.channel_lr.clone(),
            NodeId::Right => self.channel_rl.clone(),
        };
        LinkConfig {
            medium: Medium::Electrolyte(spec),
            conditioned: true,
            uart: UartConfig::new(self.baud),
            sample_rate: default_sample_rate(self.baud),
            front_end: self.front_end.clone(),
        }
    }

    fn step_ns(&self) -> Nanos {
        secs_to_nanos(self.blink_step).expect("validated")
    }

    fn timeout_ns(&self) -> Nanos {
        secs_to_nanos(self.peer_timeout).expect("validated")
    }
}

impl Default for DuplexConfig {
    fn default() -> Self {
        Self::from_calibration(&Calibration::default()).expect("default calibration is valid")
    }
}

fn start_blink(s: &mut NodeState, cfg: &DuplexConfig, now: Nanos, acts: &mut Vec<Action>) {
    s.blinking = true;
    s.awaiting_peer = false;
    s.awaiting_since = None;
    s.blink_step = 0;
    let at = now + cfg.step_ns();
    s.next_tick = Some(at);
    acts.push(Action::Record(TraceEvent::BlinkStart));
    acts.push(Action::WakeAt(at));
}

fn await_peer(s: &mut NodeState, cfg: &DuplexConfig, now: Nanos, acts: &mut Vec<Action>) {
    s.awaiting_peer = true;
    s.awaiting_since = Some(now);
    let origin = s.liveness_origin().unwrap_or(now);
    acts.push(Action::WakeAt((origin + cfg.timeout_ns()).max(now)));
}

/// Advances one node by one event. Events reaching an unpowered node are
/// dropped, except `PowerOn`.
pub fn node_step(
    state: &NodeState,
    cfg: &DuplexConfig,
    event: NodeEvent,
    now: Nanos,
) -> (NodeState, Vec<Action>) {
    let mut s = state.clone();
    let mut acts = Vec::new();
    match event {
        NodeEvent::PowerOn => {
            if s.powered {
                return (s, acts);
            }
            s = NodeState::off(s.id, cfg.blink_sequence_len);
            s.powered = true;
            s.powered_at = Some(now);
            acts.push(Action::Record(TraceEvent::PowerOn));
            match s.id {
                NodeId::Left => start_blink(&mut s, cfg, now, &mut acts),
                NodeId::Right => await_peer(&mut s, cfg, now, &mut acts),
            }
        }
        _ if !s.powered => {}
        NodeEvent::PowerOff => {
            s = NodeState::off(s.id, cfg.blink_sequence_len);
            acts.push(Action::Record(TraceEvent::PowerOff));
        }
        NodeEvent::PulseReceived => match s.mode {
            Mode::Connected => {
                let frame_start = now.saturating_sub(cfg.pulse_latency());
                if s.awaiting_since.is_some_and(|since| frame_start >= since) {
                    acts.push(Action::Record(TraceEvent::PulseReceived));
                    s.last_rx = Some(now);
                    start_blink(&mut s, cfg, now, &mut acts);
                }
            }
            Mode::Autonomous => {
                acts.push(Action::Record(TraceEvent::PulseReceived));
                if cfg.rejoin {
                    s.last_rx = Some(now);
                    s.mode = Mode::Connected;
                    acts.push(Action::Record(TraceEvent::ModeSwitch));
                    start_blink(&mut s, cfg, now, &mut acts);
                }
            }
        },
        NodeEvent::Tick => {
            if s.blinking && s.next_tick == Some(now) {
                s.blink_step += 1;
                if s.blink_step < s.blink_sequence_len {
                    let at = now + cfg.step_ns();
                    s.next_tick = Some(at);
                    acts.push(Action::WakeAt(at));
                } else {
                    s.blinking = false;
                    s.next_tick = None;
                    acts.push(Action::Record(TraceEvent::BlinkEnd));
                    acts.push(Action::SendPulse);
                    match s.mode {
                        Mode::Connected => await_peer(&mut s, cfg, now, &mut acts),
                        Mode::Autonomous => start_blink(&mut s, cfg, now, &mut acts),
                    }
                }
            }
            if s.mode == Mode::Connected && s.awaiting_peer {
                let origin = s.liveness_origin().unwrap_or(now);
                if now.saturating_sub(origin) >= cfg.timeout_ns() {
                    s.mode = Mode::Autonomous;
                    s.awaiting_peer = false;
                    acts.push(Action::Record(TraceEvent::ModeSwitch));
                    start_blink(&mut s, cfg, now, &mut acts);
                }
            }
        }
    }
    (s, acts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Injected {
    PowerOn,
    PowerOff,
    ChannelSevered,
}

impl FromStr for Injected {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "power_on" => Ok(Injected::PowerOn),
            "power_off" => Ok(Injected::PowerOff),
            "channel_severed" => Ok(Injected::ChannelSevered),
            other => Err(format!("unknown event '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Left,
    Right,
    Both,
}

impl Target {
    fn nodes(self) -> &'static [NodeId] {
        match self {
            Target::Left => &[NodeId::Left],
            Target::Right => &[NodeId::Right],
            Target::Both => &NodeId::ALL,
        }
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "left" => Ok(Target::Left),
            "right" => Ok(Target::Right),
            "both" => Ok(Target::Both),
            other => Err(format!("unknown node '{other}'")),
        }
    }
}

/// One scenario line. `ChannelSevered` on a node cuts the channel that node
/// transmits on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub t: f64,
    pub event: Injected,
    pub target: Target,
}

impl Injection {
    pub fn new(t: f64, event: Injected, target: Target) -> Self {
        Self { t, event, target }
    }
}

/// Parses `t_s inject <event> <node>` lines. Blank lines and `#` comments
/// are skipped.
pub fn parse_scenario(text: &str) -> Result<Vec<Injection>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| invalid(format!("scenario line {}: {m}", i + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [t, verb, event, target] = fields[..] else {
            return Err(err("expected 't_s inject <event> <node>'".into()));
        };
        if verb != "inject" {
            return Err(err(format!("expected 'inject', got '{verb}'")));
        }
        let t: f64 = t.parse().map_err(|_| err(format!("bad time '{t}'")))?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(err(format!("time must be >= 0, got {t}")));
        }
        out.push(Injection {
            t,
            event: event.parse().map_err(err)?,
            target: target.parse().map_err(err)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEntry {
    pub t: Nanos,
    pub node: NodeId,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    entries: Vec<TraceEntry>,
}

impl EventTrace {
    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn count(&self, event: TraceEvent) -> usize {
        self.entries.iter().filter(|e| e.event == event).count()
    }

    /// Times (s) at which `node` logged `event`.
    pub fn times(&self, node: NodeId, event: TraceEvent) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.node == node && e.event == event)
            .map(|e| nanos_to_secs(e.t))
            .collect()
    }

    /// Every pulse a node logs as received was sent by its peer strictly earlier,
    /// and timestamps never go backwards.
    pub fn is_causal(&self) -> bool {
        let mut sent = [0usize; 2];
        let mut received = [0usize; 2];
        let mut sent_before = [0usize; 2];
        let mut now = 0;
        for e in &self.entries {
            if e.t < now {
                return false;
            }
            if e.t > now {
                sent_before = sent;
                now = e.t;
            }
            let idx = e.node as usize;
            match e.event {
                TraceEvent::PulseSent => sent[idx] += 1,
                TraceEvent::PulseReceived => {
                    received[idx] += 1;
                    if received[idx] > sent_before[e.node.peer() as usize] {
                        return false;
                    }
                }
                _ => {}
            }
        }
        true
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,node,event\n");
        for e in &self.entries {
            writeln!(
                out,
                "{}.{:09},{},{}",
                e.t / 1_000_000_000,
                e.t % 1_000_000_000,
                e.node,
                e.event
            )
            .expect("string write");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Node(NodeEvent),
    Sever,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    t: Nanos,
    node: NodeId,
    seq: u64,
}

struct Queue {
    heap: BinaryHeap<Reverse<(Key, usize)>>,
    items: Vec<Item>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, t: Nanos, node: NodeId, item: Item) {
        let key = Key {
            t,
            node,
            seq: self.seq,
        };
        self.seq += 1;
        self.items.push(item);
        self.heap.push(Reverse((key, self.items.len() - 1)));
    }

    fn pop(&mut self) -> Option<(Key, Item)> {
        self.heap.pop().map(|Reverse((k, i))| (k, self.items[i]))
    }
}

/// Runs both nodes from power-on at t = 0 until `t_end`. A pulse arrives
/// one frame time after it is sent, provided the channel is intact and the
/// link carries the pulse byte without error.
pub fn simulate(cfg: &DuplexConfig, scenario: &[Injection], t_end: f64) -> Result<EventTrace> {
    cfg.validate()?;
    let end = secs_to_nanos(t_end)?;
    let mut deliverable = [false; 2];
    for node in NodeId::ALL {
        let stats = run_link(&cfg.link(node), &[PULSE_BYTE])?;
        deliverable[node as usize] =
            stats.packets_lost == 0 && stats.bit_errors == 0 && stats.framing_errors == 0;
    }

    let mut queue = Queue {
        heap: BinaryHeap::new(),
        items: Vec::new(),
        seq: 0,
    };
    for node in NodeId::ALL {
        queue.push(0, node, Item::Node(NodeEvent::PowerOn));
    }
    for inj in scenario {
        let t = secs_to_nanos(inj.t)?;
        if t > end {
            return Err(invalid(format!(
                "scenario event at {} s is past t_end",
                inj.t
            )));
        }
        for &node in inj.target.nodes() {
            let item = match inj.event {
                Injected::PowerOn => Item::Node(NodeEvent::PowerOn),
                Injected::PowerOff => Item::Node(NodeEvent::PowerOff),
                Injected::ChannelSevered => Item::Sever,
            };
            queue.push(t, node, item);
        }
    }

    let mut nodes = NodeId::ALL.map(|id| NodeState::off(id, cfg.blink_sequence_len));
    let mut severed = [false; 2];
    let mut trace = EventTrace::default();
    let latency = cfg.pulse_latency();

    while let Some((key, item)) = queue.pop() {
        if key.t > end {
            break;
        }
        let idx = key.node as usize;
        let event = match item {
            Item::Sever => {
                if !severed[idx] {
                    severed[idx] = true;
                    trace.entries.push(TraceEntry {
                        t: key.t,
                        node: key.node,
                        event: TraceEvent::ChannelSevered,
                    });
                }
                continue;
            }
            Item::Node(ev) => ev,
        };
        let (next, actions) = node_step(&nodes[idx], cfg, event, key.t);
        nodes[idx] = next;
        for action in actions {
            match action {
                Action::Record(ev) => trace.entries.push(TraceEntry {
                    t: key.t,
                    node: key.node,
                    event: ev,
                }),
                Action::WakeAt(at) => queue.push(at, key.node, Item::Node(NodeEvent::Tick)),
                Action::SendPulse => {
                    trace.entries.push(TraceEntry {
                        t: key.t,
                        node: key.node,
                        event: TraceEvent::PulseSent,
                    });
                    if deliverable[idx] && !severed[idx] {
                        queue.push(
                            key.t + latency,
                            key.node.peer(),
                            Item::Node(NodeEvent::PulseReceived),
                        );
                    }
                }
            }
        }
    }
    Ok(trace)
}
