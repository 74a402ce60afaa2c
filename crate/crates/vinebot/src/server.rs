//! TCP front end. Each connection speaks newline-delimited records, either
//! raw over the socket or as WebSocket text frames when the client opens
//! with an HTTP upgrade.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use anyhow::Result;
use crossbeam_channel::{unbounded, Receiver, Sender};
use log::{debug, info, warn};
use tungstenite::Message;
use vinebot_core::service::{ClientId, Inbound};

const SNIFF_TIMEOUT: Duration = Duration::from_millis(200);
const WS_POLL: Duration = Duration::from_millis(5);

static NEXT_CLIENT: AtomicU64 = AtomicU64::new(1);

/// Accepts connections forever, handing each to its own thread.
pub fn accept_loop(listener: TcpListener, inbox: Sender<Inbound>) {
    for stream in listener.incoming() {
        match stream {
            Ok(stream) => {
                let inbox = inbox.clone();
                let client = NEXT_CLIENT.fetch_add(1, Ordering::Relaxed);
                thread::spawn(move || {
                    if let Err(e) = serve_client(stream, client, &inbox) {
                        debug!("client {client}: {e}");
                    }
                    let _ = inbox.send(Inbound::Disconnect(client));
                });
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

fn serve_client(stream: TcpStream, client: ClientId, inbox: &Sender<Inbound>) -> Result<()> {
    let peer = stream.peer_addr()?;
    stream.set_read_timeout(Some(SNIFF_TIMEOUT))?;
    let mut head = [0u8; 4];
    let websocket = match stream.peek(&mut head) {
        Ok(4) => &head == b"GET ",
        Ok(_) => false,
        Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => false,
        Err(e) => return Err(e.into()),
    };
    stream.set_read_timeout(None)?;
    info!("client {client} connected from {peer} ({})", if websocket { "websocket" } else { "tcp" });
    let (tx, rx) = unbounded();
    inbox.send(Inbound::Connect { client, outbox: tx })?;
    if websocket {
        serve_websocket(stream, client, inbox, rx)
    } else {
        serve_tcp(stream, client, inbox, rx)
    }
}

fn serve_tcp(stream: TcpStream, client: ClientId, inbox: &Sender<Inbound>, outbox: Receiver<String>) -> Result<()> {
    let mut writer = stream.try_clone()?;
    thread::spawn(move || {
        for line in outbox {
            if writer.write_all(line.as_bytes()).and_then(|_| writer.write_all(b"\n")).is_err() {
                break;
            }
        }
    });
    for line in BufReader::new(stream).lines() {
        inbox.send(Inbound::Line { client, line: line? })?;
    }
    Ok(())
}

fn serve_websocket(
    stream: TcpStream,
    client: ClientId,
    inbox: &Sender<Inbound>,
    outbox: Receiver<String>,
) -> Result<()> {
    let mut ws = tungstenite::accept(stream)?;
    ws.get_mut().set_read_timeout(Some(WS_POLL))?;
    loop {
        match ws.read() {
            Ok(Message::Text(text)) => inbox.send(Inbound::Line { client, line: text })?,
            Ok(Message::Binary(bytes)) => inbox.send(Inbound::Line {
                client,
                line: String::from_utf8_lossy(&bytes).into_owned(),
            })?,
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        for line in outbox.try_iter() {
            ws.send(Message::Text(line))?;
        }
    }
}
