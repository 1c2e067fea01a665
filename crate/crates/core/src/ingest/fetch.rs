use std::collections::VecDeque;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::parse_log_line;
use crate::model::CombatLog;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("page size {0} outside [1, 1000]")]
    BadPageSize(usize),
    #[error("network error after {attempts} attempts: {detail}")]
    Network { attempts: u32, detail: String },
    #[error("authorization rejected (HTTP {0})")]
    Auth(u16),
    #[error("page {page} is not a JSON array of records: {detail}")]
    Protocol { page: u64, detail: String },
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub page_size: usize,
    /// Only yield logs whose era label matches.
    pub era_filter: Option<String>,
    /// Sent as `Authorization: Bearer <token>`.
    pub bearer_token: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            page_size: 100,
            era_filter: None,
            bearer_token: None,
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
            max_backoff: Duration::from_secs(4),
            timeout: Duration::from_secs(30),
        }
    }
}

/// Pages through `GET {endpoint}?page=N&page_size=K` starting at page 1.
///
/// Iteration ends after the first page holding fewer than `page_size` items.
/// Items failing validation are skipped with a warning. A failed page yields
/// one `Err` and then the stream ends.
pub fn fetch_paginated(endpoint: &str, config: FetchConfig) -> Result<PageStream, FetchError> {
    if !(1..=1000).contains(&config.page_size) {
        return Err(FetchError::BadPageSize(config.page_size));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(config.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    Ok(PageStream {
        agent,
        endpoint: endpoint.to_string(),
        config,
        next_page: 1,
        buffered: VecDeque::new(),
        finished: false,
        requests: 0,
        skipped: 0,
    })
}

pub struct PageStream {
    agent: ureq::Agent,
    endpoint: String,
    config: FetchConfig,
    next_page: u64,
    buffered: VecDeque<CombatLog>,
    finished: bool,
    requests: u32,
    skipped: usize,
}

enum Attempt {
    Ok(String),
    Retry(String),
    Fatal(FetchError),
}

impl PageStream {
    /// HTTP requests issued so far, retries included.
    pub fn requests(&self) -> u32 {
        self.requests
    }

    /// Items dropped because they failed validation or the era filter.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn page_url(&self, page: u64) -> String {
        let sep = if self.endpoint.contains('?') { '&' } else { '?' };
        format!(
            "{}{sep}page={page}&page_size={}",
            self.endpoint, self.config.page_size
        )
    }

    fn attempt(&mut self, url: &str) -> Attempt {
        self.requests += 1;
        let mut req = self.agent.get(url);
        if let Some(token) = &self.config.bearer_token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = match req.call() {
            Ok(resp) => resp,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => match resp.body_mut().read_to_string() {
                Ok(body) => Attempt::Ok(body),
                Err(e) => Attempt::Retry(e.to_string()),
            },
            401 | 403 => Attempt::Fatal(FetchError::Auth(status)),
            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}")),
            _ => Attempt::Fatal(FetchError::Protocol {
                page: self.next_page,
                detail: format!("unexpected HTTP {status}"),
            }),
        }
    }

    fn fetch_page(&mut self) -> Result<Vec<serde_json::Value>, FetchError> {
        let url = self.page_url(self.next_page);
        let mut delay = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self.attempt(&url) {
                Attempt::Ok(body) => {
                    return serde_json::from_str(&body).map_err(|e| FetchError::Protocol {
                        page: self.next_page,
                        detail: e.to_string(),
                    })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(detail) => {
                    log::warn!("GET {url} failed (attempt {attempt}): {detail}");
                    last = detail;
                }
            }
            if attempt < self.config.max_attempts {
                thread::sleep(delay);
                delay = (delay * 2).min(self.config.max_backoff);
            }
        }
        Err(FetchError::Network {
            attempts: self.config.max_attempts.max(1),
            detail: last,
        })
    }
}

impl Iterator for PageStream {
    type Item = Result<CombatLog, FetchError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(log) = self.buffered.pop_front() {
                return Some(Ok(log));
            }
            if self.finished {
                return None;
            }
            let items = match self.fetch_page() {
                Ok(items) => items,
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            };
            if items.len() < self.config.page_size {
                self.finished = true;
            }
            let page = self.next_page;
            self.next_page += 1;
            for (i, item) in items.into_iter().enumerate() {
                match parse_log_line(item.to_string().as_bytes()) {
                    Ok(log)
                        if self
                            .config
                            .era_filter
                            .as_ref()
                            .is_none_or(|era| *era == log.patch_era) =>
                    {
                        self.buffered.push_back(log)
                    }
                    Ok(_) => self.skipped += 1,
                    Err(e) => {
                        log::warn!("page {page} item {i} skipped: {e}");
                        self.skipped += 1;
                    }
                }
            }
        }
    }
}
