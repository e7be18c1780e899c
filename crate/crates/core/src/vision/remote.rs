use async_trait::async_trait;
use reqwest::header::CONTENT_TYPE;
use serde::Deserialize;

use super::{indexed_png, ClassifierOutput, SegmentationMap, VisionBackend, VisionError, VisionRequest};
use crate::retry::{retry, Attempt, DeadlineExceeded, RetryPolicy};

/// HTTP inference client.
///
/// `POST {endpoint}/classify` with the image bytes answers
/// `{"probability": <real>}`; `POST {endpoint}/segment` answers an indexed PNG
/// whose palette indices are the segmentation labels.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    client: reqwest::Client,
    policy: RetryPolicy,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    probability: f64,
}

impl From<DeadlineExceeded> for VisionError {
    fn from(_: DeadlineExceeded) -> Self {
        VisionError::BackendUnreachable("deadline exceeded".into())
    }
}

impl RemoteBackend {
    pub fn new(endpoint: &str) -> Result<Self, VisionError> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| VisionError::Config(format!("http client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            client,
            policy: RetryPolicy::VISION,
        })
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    async fn post(&self, route: &str, request: VisionRequest<'_>) -> Result<Vec<u8>, VisionError> {
        let url = format!("{}/{route}", self.endpoint);
        let body = request.image.encoded().into_owned();
        let mime = request.image.source_format().mime();
        retry(self.policy, |_| {
            let req = self
                .client
                .post(&url)
                .header(CONTENT_TYPE, mime)
                .body(body.clone());
            let url = url.clone();
            async move {
                let resp = req
                    .send()
                    .await
                    .map_err(|e| Attempt::Transient(VisionError::BackendUnreachable(e.to_string())))?;
                let status = resp.status();
                if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
                    return Err(Attempt::Transient(VisionError::BackendUnreachable(format!(
                        "{url}: HTTP {status}"
                    ))));
                }
                if !status.is_success() {
                    return Err(Attempt::Fatal(VisionError::BackendUnreachable(format!(
                        "{url}: HTTP {status}"
                    ))));
                }
                resp.bytes()
                    .await
                    .map(|b| b.to_vec())
                    .map_err(|e| Attempt::Transient(VisionError::BackendUnreachable(e.to_string())))
            }
        })
        .await
    }
}

#[async_trait]
impl VisionBackend for RemoteBackend {
    async fn classify(&self, request: VisionRequest<'_>) -> Result<ClassifierOutput, VisionError> {
        let body = self.post("classify", request).await?;
        let parsed: ClassifyResponse = serde_json::from_slice(&body)
            .map_err(|e| VisionError::Malformed(format!("classify response: {e}")))?;
        ClassifierOutput::new(parsed.probability)
    }

    async fn segment(&self, request: VisionRequest<'_>) -> Result<SegmentationMap, VisionError> {
        let body = self.post("segment", request).await?;
        let map = indexed_png::decode(&body)?;
        map.check_matches(request.image)?;
        Ok(map)
    }
}
