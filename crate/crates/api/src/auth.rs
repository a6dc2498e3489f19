use std::time::{Duration, SystemTime, UNIX_EPOCH};

use argon2::password_hash::rand_core::OsRng;
use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use vidnote_core::UserId;
use vidnote_store::Role;

use crate::config::PasswordCost;
use crate::error::ApiError;

pub const MIN_PASSWORD_LEN: usize = 10;

type HmacSha256 = Hmac<Sha256>;

/// Claims carried by a session token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claims {
    pub sub: UserId,
    pub role: Role,
    /// Expiry as seconds since the Unix epoch.
    pub exp: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Signs and checks `payload.mac` tokens, both parts base64url without padding.
#[derive(Clone)]
pub struct TokenSigner {
    key: Vec<u8>,
    ttl: Duration,
}

impl TokenSigner {
    pub fn new(key: Vec<u8>, ttl: Duration) -> Self {
        Self { key, ttl }
    }

    pub fn random(ttl: Duration) -> Self {
        let mut key = vec![0u8; 32];
        rand::thread_rng().fill_bytes(&mut key);
        Self::new(key, ttl)
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.key).expect("hmac accepts any key length")
    }

    pub fn issue(&self, sub: UserId, role: Role) -> (String, Claims) {
        self.issue_at(sub, role, unix_now())
    }

    pub fn issue_at(&self, sub: UserId, role: Role, now: u64) -> (String, Claims) {
        let claims = Claims { sub, role, exp: now + self.ttl.as_secs() };
        let payload = URL_SAFE_NO_PAD.encode(serde_json::to_vec(&claims).expect("claims serialize"));
        let mut mac = self.mac();
        mac.update(payload.as_bytes());
        let sig = URL_SAFE_NO_PAD.encode(mac.finalize().into_bytes());
        (format!("{payload}.{sig}"), claims)
    }

    pub fn verify(&self, token: &str) -> Result<Claims, ApiError> {
        self.verify_at(token, unix_now())
    }

    pub fn verify_at(&self, token: &str, now: u64) -> Result<Claims, ApiError> {
        let (payload, sig) = token.split_once('.').ok_or(ApiError::Unauthorized)?;
        let sig = URL_SAFE_NO_PAD.decode(sig).map_err(|_| ApiError::Unauthorized)?;
        let mut mac = self.mac();
        mac.update(payload.as_bytes());
        mac.verify_slice(&sig).map_err(|_| ApiError::Unauthorized)?;
        let raw = URL_SAFE_NO_PAD.decode(payload).map_err(|_| ApiError::Unauthorized)?;
        let claims: Claims = serde_json::from_slice(&raw).map_err(|_| ApiError::Unauthorized)?;
        if claims.exp <= now {
            return Err(ApiError::Unauthorized);
        }
        Ok(claims)
    }
}

/// Argon2id password hashing. Holds a hash of a random password so that
/// unknown accounts cost the same verification time as known ones.
pub struct Passwords {
    argon: Argon2<'static>,
    dummy: String,
}

impl Passwords {
    pub fn new(cost: PasswordCost) -> Result<Self, ApiError> {
        let params =
            Params::new(cost.memory_kib, cost.iterations, cost.parallelism, None).map_err(ApiError::internal)?;
        let argon = Argon2::new(Algorithm::Argon2id, Version::V0x13, params);
        let mut this = Self { argon, dummy: String::new() };
        let mut filler = [0u8; 24];
        rand::thread_rng().fill_bytes(&mut filler);
        this.dummy = this.hash(&URL_SAFE_NO_PAD.encode(filler))?;
        Ok(this)
    }

    pub fn hash(&self, password: &str) -> Result<String, ApiError> {
        let salt = SaltString::generate(&mut OsRng);
        self.argon.hash_password(password.as_bytes(), &salt).map(|h| h.to_string()).map_err(ApiError::internal)
    }

    pub fn verify(&self, password: &str, hash: &str) -> bool {
        PasswordHash::new(hash).is_ok_and(|h| self.argon.verify_password(password.as_bytes(), &h).is_ok())
    }

    /// Burns one verification against the dummy hash.
    pub fn verify_dummy(&self, password: &str) {
        let _ = self.verify(password, &self.dummy);
    }
}

pub fn check_password_strength(password: &str) -> Result<(), ApiError> {
    if password.chars().count() < MIN_PASSWORD_LEN {
        return Err(ApiError::WeakPassword(MIN_PASSWORD_LEN));
    }
    Ok(())
}

pub fn normalize_email(email: &str) -> Result<String, ApiError> {
    let email = email.trim().to_lowercase();
    match email.split_once('@') {
        Some((local, domain)) if !local.is_empty() && !domain.is_empty() && !email.contains(char::is_whitespace) => {
            Ok(email)
        }
        _ => Err(ApiError::BadRequest("invalid email address".into())),
    }
}
