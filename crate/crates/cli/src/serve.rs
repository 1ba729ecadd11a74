//! WebSocket front end. One task owns the engine; connection tasks forward
//! frames to it over a channel and receive replies on their own channel.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use futures::{SinkExt, StreamExt};
use log::{info, warn};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::time::MissedTickBehavior;
use tokio_tungstenite::tungstenite::Message;

use comanip::session::{Engine, Inbound, JsonlSink, Outbound, Recipient, TICK_HZ};
use comanip::{StrategyConfig, UserId, WireframeModel};

pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub strategy: StrategyConfig,
    pub model: WireframeModel,
    pub target: WireframeModel,
    pub log: PathBuf,
}

type ConnId = u64;

enum Event {
    Open(ConnId, mpsc::UnboundedSender<String>),
    Frame(ConnId, String),
    Closed(ConnId),
}

struct Conn {
    tx: mpsc::UnboundedSender<String>,
    user: Option<UserId>,
}

pub async fn serve(cfg: ServeConfig) -> Result<()> {
    let listener = TcpListener::bind((cfg.host.as_str(), cfg.port)).await.context("binding listener")?;
    let addr = listener.local_addr()?;
    // Printed on stdout so scripts can discover an ephemeral port.
    println!("listening on ws://{addr}");
    info!("strategy {} log {}", cfg.strategy.name(), cfg.log.display());

    let file = File::create(&cfg.log).with_context(|| format!("creating {}", cfg.log.display()))?;
    let engine = Engine::new(cfg.model, cfg.target, cfg.strategy, TICK_HZ, 0, JsonlSink(BufWriter::new(file)))?;
    let (events_tx, events_rx) = mpsc::unbounded_channel();
    let session = tokio::spawn(run_session(engine, events_rx));

    let mut next_id: ConnId = 0;
    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                let id = next_id;
                next_id += 1;
                info!("connection {id} from {peer}");
                tokio::spawn(connection(id, stream, events_tx.clone()));
            }
            _ = tokio::signal::ctrl_c() => break,
        }
    }
    drop(events_tx);
    session.abort();
    Ok(())
}

async fn connection(id: ConnId, stream: TcpStream, events: mpsc::UnboundedSender<Event>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            warn!("connection {id}: handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut stream) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    if events.send(Event::Open(id, tx)).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(Message::text(text)).await.is_err() {
                break;
            }
        }
    });
    while let Some(frame) = stream.next().await {
        match frame {
            Ok(Message::Text(text)) => {
                // A frame may carry several newline-delimited messages.
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    let _ = events.send(Event::Frame(id, line.to_string()));
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = events.send(Event::Frame(id, String::from("<binary>")));
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    let _ = events.send(Event::Closed(id));
    writer.abort();
}

async fn run_session(
    mut engine: Engine<JsonlSink<BufWriter<File>>>,
    mut events: mpsc::UnboundedReceiver<Event>,
) -> Result<()> {
    let start = Instant::now();
    let now = || start.elapsed().as_millis() as u64;
    let mut conns: BTreeMap<ConnId, Conn> = BTreeMap::new();
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / f64::from(TICK_HZ)));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            ev = events.recv() => {
                let Some(ev) = ev else { break };
                match ev {
                    Event::Open(id, tx) => {
                        conns.insert(id, Conn { tx, user: None });
                    }
                    Event::Frame(id, text) => {
                        let Some(from) = conns.get(&id).map(|c| c.user) else { continue };
                        let msg = Inbound::parse(&text);
                        deliver(&mut engine, &mut conns, id, from, msg, now())?;
                    }
                    Event::Closed(id) => {
                        if let Some(Conn { user: Some(u), .. }) = conns.get(&id) {
                            let u = *u;
                            deliver(&mut engine, &mut conns, id, Some(u), Inbound::Leave {}, now())?;
                        }
                        conns.remove(&id);
                    }
                }
            }
            _ = ticker.tick() => {
                let snap = engine.tick(now())?;
                if conns.values().any(|c| c.user.is_some()) {
                    let text = serde_json::to_string(&Outbound::State(snap))?;
                    for c in conns.values().filter(|c| c.user.is_some()) {
                        let _ = c.tx.send(text.clone());
                    }
                }
                engine.flush()?;
            }
        }
    }
    engine.flush()?;
    Ok(())
}

fn deliver(
    engine: &mut Engine<JsonlSink<BufWriter<File>>>,
    conns: &mut BTreeMap<ConnId, Conn>,
    id: ConnId,
    from: Option<UserId>,
    msg: Inbound,
    t_ms: u64,
) -> Result<()> {
    let leaving = matches!(msg, Inbound::Leave {} | Inbound::Malformed { .. }) && from.is_some();
    let d = engine.inbound(from, msg, t_ms)?;
    if let Some(c) = conns.get_mut(&id) {
        // Joins take effect before routing so the welcome reaches the sender.
        if !leaving {
            c.user = d.user;
        }
    }
    for env in d.replies {
        let text = serde_json::to_string(&env.msg)?;
        match env.to {
            Recipient::Sender => {
                if let Some(c) = conns.get(&id) {
                    let _ = c.tx.send(text);
                }
            }
            Recipient::User(u) => {
                for c in conns.values().filter(|c| c.user == Some(u)) {
                    let _ = c.tx.send(text.clone());
                }
            }
            Recipient::All => {
                for c in conns.values().filter(|c| c.user.is_some()) {
                    let _ = c.tx.send(text.clone());
                }
            }
        }
    }
    if leaving {
        if let Some(c) = conns.get_mut(&id) {
            c.user = None;
        }
    }
    Ok(())
}
