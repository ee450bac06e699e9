//! TCP transport for live demos, using the same frames as the simulator.
//!
//! Each sensor node opens one connection and streams frames. The receiver
//! runs one reader thread per connection and hands decoded envelopes over a
//! channel; [`TcpReceiver::drain`] returns them ordered by arrival time.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use super::wire::{read_frame, write_frame};
use super::Envelope;
use crate::tracking::StampedObjectList;
use crate::Timestamp;

pub struct TcpSender {
    stream: BufWriter<TcpStream>,
}

impl TcpSender {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpSender { stream: BufWriter::new(stream) })
    }

    pub fn send(&mut self, msg: &StampedObjectList) -> io::Result<()> {
        write_frame(&mut self.stream, msg)?;
        self.stream.flush()
    }
}

pub struct TcpReceiver {
    local_addr: SocketAddr,
    rx: Receiver<Envelope>,
    _acceptor: JoinHandle<()>,
}

impl TcpReceiver {
    /// Binds and starts accepting. Port 0 picks a free port.
    pub fn bind<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let local_addr = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let epoch = Instant::now();
        let acceptor = thread::spawn(move || {
            for stream in listener.incoming() {
                match stream {
                    Ok(s) => {
                        let tx = tx.clone();
                        thread::spawn(move || read_connection(s, tx, epoch));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        });
        Ok(TcpReceiver { local_addr, rx, _acceptor: acceptor })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// Blocks until one envelope arrives or the timeout passes.
    pub fn recv_timeout(&self, timeout: std::time::Duration) -> Option<Envelope> {
        self.rx.recv_timeout(timeout).ok()
    }

    /// Everything received so far, oldest arrival first.
    pub fn drain(&self) -> Vec<Envelope> {
        let mut out: Vec<Envelope> = self.rx.try_iter().collect();
        out.sort_by_key(|e| (e.arrival_timestamp, e.node_id, e.send_timestamp));
        out
    }
}

fn read_connection(stream: TcpStream, tx: Sender<Envelope>, epoch: Instant) {
    let peer = stream.peer_addr().ok();
    let mut reader = BufReader::new(stream);
    loop {
        match read_frame(&mut reader) {
            Ok(Some(msg)) => {
                let arrival = Timestamp::from_micros(epoch.elapsed().as_micros() as i64);
                let mut env = Envelope::new(msg.clone(), msg.capture_timestamp);
                env.arrival_timestamp = Some(arrival);
                if tx.send(env).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                log::warn!("dropping connection {peer:?}: {e}");
                return;
            }
        }
    }
}
