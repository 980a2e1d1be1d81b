// Session keys live in sessionStorage only: the seed is imported per tab
// and the private key never travels over the wire.

import { deriveIdentity } from "./crypto.js";
import { Session } from "./api.js";

const STORAGE_KEY = "ledgerehr-session";

interface StoredSession {
  seedHex: string;
  baseUrl: string;
  label: string;
}

export async function establishSession(
  seedHex: string,
  baseUrl: string,
  label: string,
): Promise<Session> {
  const derived = await deriveIdentity(seedHex.trim());
  const session: Session = {
    ...derived,
    baseUrl: baseUrl.replace(/\/+$/, ""),
    label,
  };
  sessionStorage.setItem(
    STORAGE_KEY,
    JSON.stringify({ seedHex: seedHex.trim(), baseUrl: session.baseUrl, label } satisfies StoredSession),
  );
  return session;
}

export async function restoreSession(): Promise<Session | null> {
  const raw = sessionStorage.getItem(STORAGE_KEY);
  if (!raw) return null;
  try {
    const stored = JSON.parse(raw) as StoredSession;
    const derived = await deriveIdentity(stored.seedHex);
    return { ...derived, baseUrl: stored.baseUrl, label: stored.label };
  } catch {
    sessionStorage.removeItem(STORAGE_KEY);
    return null;
  }
}

export function clearSession(): void {
  sessionStorage.removeItem(STORAGE_KEY);
}
