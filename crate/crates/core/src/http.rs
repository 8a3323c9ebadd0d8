use std::time::Duration;

use crate::retry::Fault;

/// POSTs a JSON body and decodes a JSON response. 5xx, 429 and transport
/// failures are transient; other non-2xx statuses are permanent.
pub(crate) fn post_json(
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
    timeout: Duration,
) -> Result<serde_json::Value, Fault> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut req = agent.post(url);
    if let Some(key) = bearer {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| Fault::transient(format!("transport: {e}")))?;
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Err(Fault::transient(format!("http status {status}")));
    }
    if !(200..300).contains(&status) {
        return Err(Fault::permanent(format!("http status {status}")));
    }
    resp.body_mut()
        .read_json::<serde_json::Value>()
        .map_err(|e| Fault::permanent(format!("invalid response body: {e}")))
}
