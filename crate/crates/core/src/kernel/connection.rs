use std::net::TcpListener;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KernelError;

pub const SIGNATURE_SCHEME: &str = "hmac-sha256";

/// Contents of a kernel connection file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionInfo {
    pub transport: String,
    pub ip: String,
    pub shell_port: u16,
    pub iopub_port: u16,
    pub stdin_port: u16,
    pub control_port: u16,
    pub hb_port: u16,
    pub signature_scheme: String,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_name: Option<String>,
}

impl ConnectionInfo {
    /// Fresh connection parameters on loopback: five distinct free TCP ports
    /// and a random key.
    pub fn generate() -> Result<Self, KernelError> {
        // Keep all five listeners open until every port is chosen so that the
        // OS cannot hand out the same port twice.
        let listeners: Vec<TcpListener> = (0..5)
            .map(|_| TcpListener::bind("127.0.0.1:0"))
            .collect::<Result<_, _>>()
            .map_err(|e| KernelError::LaunchFailed(format!("allocating ports: {e}")))?;
        let ports: Vec<u16> = listeners
            .iter()
            .map(|l| l.local_addr().map(|a| a.port()))
            .collect::<Result<_, _>>()
            .map_err(|e| KernelError::LaunchFailed(format!("allocating ports: {e}")))?;
        drop(listeners);
        Ok(ConnectionInfo {
            transport: "tcp".into(),
            ip: "127.0.0.1".into(),
            shell_port: ports[0],
            iopub_port: ports[1],
            stdin_port: ports[2],
            control_port: ports[3],
            hb_port: ports[4],
            signature_scheme: SIGNATURE_SCHEME.into(),
            key: uuid::Uuid::new_v4().to_string(),
            kernel_name: None,
        })
    }

    pub fn ports(&self) -> [u16; 5] {
        [
            self.shell_port,
            self.iopub_port,
            self.stdin_port,
            self.control_port,
            self.hb_port,
        ]
    }

    /// Checks that the ports are nonzero and pairwise distinct and that a key
    /// accompanies the signature scheme.
    pub fn validate(&self) -> Result<(), String> {
        let ports = self.ports();
        if ports.contains(&0) {
            return Err("port 0 in connection info".into());
        }
        for (i, a) in ports.iter().enumerate() {
            if ports[i + 1..].contains(a) {
                return Err(format!("port {a} used twice"));
            }
        }
        if !self.signature_scheme.is_empty() && self.key.is_empty() {
            return Err("signature scheme set without a key".into());
        }
        if !self.signature_scheme.is_empty() && self.signature_scheme != SIGNATURE_SCHEME {
            return Err(format!("unsupported signature scheme {}", self.signature_scheme));
        }
        Ok(())
    }

    pub fn endpoint(&self, port: u16) -> String {
        format!("{}://{}:{port}", self.transport, self.ip)
    }

    pub fn write_file(&self, path: &Path) -> std::io::Result<()> {
        let body = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, body)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))?;
        }
        Ok(())
    }
}
