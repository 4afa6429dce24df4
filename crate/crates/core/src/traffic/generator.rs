use std::cmp::Reverse;
use std::collections::BinaryHeap;

use indexmap::IndexMap;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::MICROS_PER_SECOND;
use crate::hashing::{hash64, stream};
use crate::sim::{PurchaseResponse, RequestSink, StoreError, StoreRequest};
use crate::spec::{UserClass, UserProfile};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrafficError {
    #[error("no active setup")]
    NoActiveSetup,
    #[error("invalid user class {class}: {message}")]
    InvalidClass { class: String, message: String },
    #[error("request from {client} at {timestamp_us}us failed: {source}")]
    Request {
        client: String,
        timestamp_us: u64,
        #[source]
        source: StoreError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratorStats {
    pub requests_sent: u64,
    pub by_class: IndexMap<String, u64>,
}

#[derive(Debug)]
struct ClassState {
    name: String,
    class: UserClass,
    inter_arrival: Exp<f64>,
}

#[derive(Debug)]
struct Client {
    id: String,
    class: usize,
    rng: ChaCha8Rng,
    requests: u64,
}

/// Discrete-event request originator for one user profile.
///
/// Every client of a class sends requests with exponential inter-arrival
/// times of the class's mean. Events fire in `(time, client ordinal)` order,
/// so the request sequence depends only on the profile, the seed and the
/// start time, never on how the caller slices time.
#[derive(Debug)]
pub struct TrafficGenerator {
    seed: u64,
    classes: Vec<ClassState>,
    clients: Vec<Client>,
    queue: BinaryHeap<Reverse<(u64, usize)>>,
    now_us: u64,
    running: bool,
    stats: GeneratorStats,
}

impl TrafficGenerator {
    /// Schedules the first request of every client after `start_us`. Fails
    /// when the store has no deployed setup.
    pub fn start(
        profile: &UserProfile,
        seed: u64,
        start_us: u64,
        sink: &dyn RequestSink,
    ) -> Result<Self, TrafficError> {
        if !sink.is_ready() {
            return Err(TrafficError::NoActiveSetup);
        }
        let mut classes = Vec::with_capacity(profile.classes.len());
        let mut clients = Vec::new();
        let mut stats = GeneratorStats::default();
        for (ci, (name, class)) in profile.classes.iter().enumerate() {
            let inter_arrival = Exp::new(1.0 / class.mean_seconds_between_request).map_err(|e| {
                TrafficError::InvalidClass { class: name.clone(), message: e.to_string() }
            })?;
            for index in 0..class.count {
                let id = format!("{name}:{index}");
                let rng = stream(seed, &[b"arrivals", id.as_bytes()]);
                clients.push(Client { id, class: ci, rng, requests: 0 });
            }
            stats.by_class.insert(name.clone(), 0);
            classes.push(ClassState { name: name.clone(), class: class.clone(), inter_arrival });
        }
        let mut generator = Self {
            seed,
            classes,
            clients,
            queue: BinaryHeap::new(),
            now_us: start_us,
            running: true,
            stats,
        };
        for ordinal in 0..generator.clients.len() {
            let at = generator.next_arrival(ordinal, start_us);
            generator.queue.push(Reverse((at, ordinal)));
        }
        Ok(generator)
    }

    fn next_arrival(&mut self, ordinal: usize, after_us: u64) -> u64 {
        let client = &mut self.clients[ordinal];
        let gap_s = self.classes[client.class].inter_arrival.sample(&mut client.rng);
        // At least 1us so a client never sends two requests at one instant.
        let gap_us = ((gap_s * MICROS_PER_SECOND as f64).round() as u64).max(1);
        after_us.saturating_add(gap_us)
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    /// Fires every request scheduled in `(now, now + duration_us]` in
    /// timestamp order and returns the store's responses. On a failed
    /// request the generator stops at that event.
    pub fn advance(
        &mut self,
        duration_us: u64,
        sink: &dyn RequestSink,
    ) -> Result<Vec<PurchaseResponse>, TrafficError> {
        let end = self.now_us.saturating_add(duration_us);
        let mut responses = Vec::new();
        if !self.running {
            self.now_us = end;
            return Ok(responses);
        }
        while let Some(&Reverse((at, ordinal))) = self.queue.peek() {
            if at > end {
                break;
            }
            self.queue.pop();
            self.now_us = at;
            let request = self.request_for(ordinal, at);
            let client = request.client_id.clone();
            let response = sink.submit(request).map_err(|source| {
                self.running = false;
                TrafficError::Request { client, timestamp_us: at, source }
            })?;
            responses.push(response);
            let class = self.clients[ordinal].class;
            self.clients[ordinal].requests += 1;
            self.stats.requests_sent += 1;
            *self.stats.by_class.get_mut(&self.classes[class].name).expect("class registered") += 1;
            let next = self.next_arrival(ordinal, at);
            self.queue.push(Reverse((next, ordinal)));
        }
        self.now_us = end;
        Ok(responses)
    }

    fn request_for(&self, ordinal: usize, at: u64) -> StoreRequest {
        let client = &self.clients[ordinal];
        let index = client.requests;
        StoreRequest {
            client_id: client.id.clone(),
            items: Vec::new(),
            request_index: Some(index),
            flow_seed: Some(hash64(self.seed, &[b"flow", client.id.as_bytes(), &index.to_le_bytes()])),
            timestamp_us: at,
            behavior: Some(self.classes[client.class].class.clone()),
        }
    }

    /// Stops issuing requests. Stopping again returns the same totals.
    pub fn stop(&mut self) -> GeneratorStats {
        self.running = false;
        self.queue.clear();
        self.stats.clone()
    }

    pub fn stats(&self) -> &GeneratorStats {
        &self.stats
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }
}
