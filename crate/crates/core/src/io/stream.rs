//! Length-prefixed binary framing for live sensor output over TCP.
//!
//! Every message is an 18-byte little-endian header followed by the payload:
//! magic `RSIM`, version u8, type u8, timestamp u64 ns, payload length u32.
//! Payloads are byte-identical to the files written to disk.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RSIM";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
/// Frames a client may lag behind before it is disconnected.
pub const CLIENT_BACKLOG: usize = 64;
pub const DEFAULT_MAX_PAYLOAD: u32 = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    PointCloud = 0,
    DepthImage = 1,
    SegImage = 2,
    RgbImage = 3,
    Imu = 4,
    Pose = 5,
    /// Per-point class and instance words matching a point cloud.
    Labels = 6,
}

impl MessageType {
    pub const ALL: [MessageType; 7] = [
        MessageType::PointCloud,
        MessageType::DepthImage,
        MessageType::SegImage,
        MessageType::RgbImage,
        MessageType::Imu,
        MessageType::Pose,
        MessageType::Labels,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamMessage {
    pub kind: MessageType,
    pub timestamp_ns: u64,
    pub payload: Vec<u8>,
}

impl StreamMessage {
    pub fn new(kind: MessageType, timestamp_ns: u64, payload: Vec<u8>) -> Self {
        StreamMessage {
            kind,
            timestamp_ns,
            payload,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let len = u32::try_from(self.payload.len()).map_err(|_| Error::invalid("stream payload exceeds 4 GiB"))?;
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.timestamp_ns.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Header {
    kind: MessageType,
    timestamp_ns: u64,
    len: u32,
}

fn parse_header(b: &[u8], max_payload: u32) -> Result<Header> {
    if b[..4] != MAGIC {
        return Err(Error::format("bad stream magic"));
    }
    if b[4] != VERSION {
        return Err(Error::format(format!("unsupported stream version {}", b[4])));
    }
    let kind = MessageType::from_u8(b[5]).ok_or_else(|| Error::format(format!("unknown message type {}", b[5])))?;
    let timestamp_ns = u64::from_le_bytes(b[6..14].try_into().unwrap());
    let len = u32::from_le_bytes(b[14..18].try_into().unwrap());
    if len > max_payload {
        return Err(Error::format(format!("payload of {len} bytes exceeds limit {max_payload}")));
    }
    Ok(Header { kind, timestamp_ns, len })
}

/// Incremental decoder for a byte stream arriving in arbitrary chunks.
///
/// After a framing error the decoder stays failed: it never scans ahead for
/// the next magic.
#[derive(Debug)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    start: usize,
    max_payload: u32,
    failed: bool,
}

impl Default for StreamDecoder {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_PAYLOAD)
    }
}

impl StreamDecoder {
    pub fn new(max_payload: u32) -> Self {
        StreamDecoder {
            buf: Vec::new(),
            start: 0,
            max_payload,
            failed: false,
        }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start * 2 >= self.buf.len() {
            self.buf.drain(..self.start);
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete message, `None` if more bytes are needed.
    pub fn next_message(&mut self) -> Result<Option<StreamMessage>> {
        if self.failed {
            return Err(Error::format("stream decoder is in a failed state"));
        }
        let avail = &self.buf[self.start..];
        if avail.len() < HEADER_LEN {
            // Reject bad magic as soon as it is visible.
            let n = avail.len().min(4);
            if avail[..n] != MAGIC[..n] {
                self.failed = true;
                return Err(Error::format("bad stream magic"));
            }
            return Ok(None);
        }
        let h = parse_header(avail, self.max_payload).inspect_err(|_| self.failed = true)?;
        let total = HEADER_LEN + h.len as usize;
        if avail.len() < total {
            return Ok(None);
        }
        let payload = avail[HEADER_LEN..total].to_vec();
        self.start += total;
        Ok(Some(StreamMessage::new(h.kind, h.timestamp_ns, payload)))
    }

    /// Bytes received but not yet consumed by a complete message.
    pub fn pending(&self) -> usize {
        self.buf.len() - self.start
    }
}

/// Blocking read of one message. `Ok(None)` on a clean end of stream
/// between messages.
pub fn read_message<R: Read>(r: &mut R, max_payload: u32) -> Result<Option<StreamMessage>> {
    let mut head = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        let n = r.read(&mut head[got..])?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::format("stream ended inside a header"));
        }
        got += n;
    }
    let h = parse_header(&head, max_payload)?;
    let mut payload = vec![0; h.len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(StreamMessage::new(h.kind, h.timestamp_ns, payload)))
}

struct Client {
    peer: SocketAddr,
    tx: SyncSender<Arc<Vec<u8>>>,
    alive: Arc<AtomicBool>,
}

/// TCP fan-out server. `publish` never blocks: each client has a bounded
/// queue and is dropped when it overflows.
pub struct StreamServer {
    addr: SocketAddr,
    clients: Arc<Mutex<Vec<Client>>>,
    writers: Arc<Mutex<Vec<JoinHandle<()>>>>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl StreamServer {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let clients: Arc<Mutex<Vec<Client>>> = Arc::default();
        let writers: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let (clients, writers, stop) = (clients.clone(), writers.clone(), stop.clone());
            std::thread::Builder::new().name("stream-accept".into()).spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match conn {
                        Ok(sock) => {
                            if let Some((client, handle)) = spawn_writer(sock) {
                                log::info!("stream client connected: {}", client.peer);
                                clients.lock().unwrap().push(client);
                                writers.lock().unwrap().push(handle);
                            }
                        }
                        Err(e) => log::warn!("stream accept failed: {e}"),
                    }
                }
            })?
        };
        Ok(StreamServer {
            addr,
            clients,
            writers,
            stop,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        let mut c = self.clients.lock().unwrap();
        c.retain(|c| c.alive.load(Ordering::SeqCst));
        c.len()
    }

    /// Waits until at least `n` clients are connected or the timeout passes.
    pub fn wait_for_clients(&self, n: usize, timeout: Duration) -> bool {
        let end = Instant::now() + timeout;
        loop {
            if self.client_count() >= n {
                return true;
            }
            if Instant::now() >= end {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    pub fn publish(&self, msg: &StreamMessage) -> Result<()> {
        self.publish_encoded(Arc::new(msg.encode()?));
        Ok(())
    }

    pub fn publish_encoded(&self, bytes: Arc<Vec<u8>>) {
        let mut clients = self.clients.lock().unwrap();
        clients.retain(|c| {
            if !c.alive.load(Ordering::SeqCst) {
                return false;
            }
            match c.tx.try_send(bytes.clone()) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    log::warn!(
                        "stream client {} exceeded {CLIENT_BACKLOG} queued frames, disconnecting",
                        c.peer
                    );
                    c.alive.store(false, Ordering::SeqCst);
                    false
                }
                Err(TrySendError::Disconnected(_)) => false,
            }
        });
    }

    /// Stops accepting, lets every client drain its queue, and joins all
    /// threads.
    pub fn finish(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        self.clients.lock().unwrap().clear();
        for h in self.writers.lock().unwrap().drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for StreamServer {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.shutdown();
        }
    }
}

fn spawn_writer(mut sock: TcpStream) -> Option<(Client, JoinHandle<()>)> {
    let peer = sock.peer_addr().ok()?;
    let _ = sock.set_nodelay(true);
    let (tx, rx) = sync_channel::<Arc<Vec<u8>>>(CLIENT_BACKLOG);
    let alive = Arc::new(AtomicBool::new(true));
    let flag = alive.clone();
    let handle = std::thread::Builder::new()
        .name(format!("stream-{peer}"))
        .spawn(move || {
            for bytes in rx {
                if !flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Err(e) = sock.write_all(&bytes) {
                    log::info!("stream client {peer} disconnected: {e}");
                    flag.store(false, Ordering::SeqCst);
                    break;
                }
            }
            let _ = sock.flush();
            let _ = sock.shutdown(std::net::Shutdown::Write);
        })
        .ok()?;
    Some((Client { peer, tx, alive }, handle))
}
