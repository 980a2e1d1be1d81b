// App shell: session management plus the four tabs. The server remains the
// authority for every policy decision; this client only renders outcomes.

import { Session, health } from "./api.js";
import { banner, clear, el } from "./dom.js";
import { clearSession, establishSession, restoreSession } from "./session.js";
import { renderAudit } from "./views/audit.js";
import { renderExplorer } from "./views/explorer.js";
import { renderForm } from "./views/form.js";
import { renderRecords } from "./views/records.js";

let session: Session | null = null;
const current = (): Session | null => session;

const TABS = ["Session", "New Patient", "Records", "Explorer", "Audit"] as const;
type Tab = (typeof TABS)[number];

function start(): void {
  const app = document.getElementById("app");
  if (!app) return;
  const header = el("header", {}, [
    el("h1", {}, ["ledgerehr"]),
    el("p", { class: "tagline" }, ["consortium health-record ledger"]),
  ]);
  const sessionBadge = el("span", { class: "session-badge" }, ["no session"]);
  const nav = el("nav", {});
  const body = el("main", {});
  app.append(header, sessionBadge, nav, body);

  const explorerHandle = { focusTx: (_: string) => switchTab("Explorer") };

  function refreshBadge(): void {
    sessionBadge.textContent = session
      ? `${session.label} · ${session.actorIdHex.slice(0, 12)}… @ ${session.baseUrl}`
      : "no session";
  }

  function renderSessionTab(root: HTMLElement): void {
    clear(root);
    const status = el("div");
    const seedInput = el("input", { type: "password", placeholder: "32-byte seed, hex" });
    const urlInput = el("input", { type: "text", value: session?.baseUrl ?? "http://127.0.0.1:9301" });
    const labelInput = el("input", { type: "text", placeholder: "display name", value: session?.label ?? "" });
    const importButton = el("button", {}, ["Import key"]);
    const forgetButton = el("button", {}, ["Forget session"]);

    importButton.addEventListener("click", async () => {
      clear(status);
      try {
        session = await establishSession(
          seedInput.value,
          urlInput.value,
          labelInput.value || "stakeholder",
        );
        const info = await health(session.baseUrl);
        status.append(
          banner("ok", `Session ready. Node height ${info.height}. Actor ${session.actorIdHex}`),
        );
        seedInput.value = "";
        refreshBadge();
      } catch (error) {
        session = null;
        refreshBadge();
        status.append(banner("error", `Could not establish session: ${String(error)}`));
      }
    });
    forgetButton.addEventListener("click", () => {
      clearSession();
      session = null;
      refreshBadge();
      clear(status);
      status.append(banner("info", "Session cleared."));
    });

    root.append(
      el("h2", {}, ["Session"]),
      el("p", {}, [
        "Paste the hex seed produced by the operator's keygen tool. The key is held in this tab's session storage and is used to sign every request locally; it is never transmitted.",
      ]),
      el("label", { class: "field" }, ["Seed (hex)", seedInput]),
      el("label", { class: "field" }, ["Node base URL", urlInput]),
      el("label", { class: "field" }, ["Label", labelInput]),
      el("div", { class: "toolbar" }, [importButton, forgetButton]),
      status,
    );
  }

  function switchTab(tab: Tab): void {
    clear(body);
    for (const button of nav.querySelectorAll("button")) {
      button.classList.toggle("active", button.textContent === tab);
    }
    const pane = el("section", { class: "pane" });
    body.append(pane);
    if (tab === "Session") renderSessionTab(pane);
    else if (tab === "New Patient")
      renderForm(pane, current, (txHash) => {
        switchTab("Explorer");
        explorerHandle.focusTx(txHash);
      });
    else if (tab === "Records") renderRecords(pane, current);
    else if (tab === "Explorer") {
      const handle = renderExplorer(pane, current);
      explorerHandle.focusTx = handle.focusTx;
    } else renderAudit(pane, current);
  }

  for (const tab of TABS) {
    const button = el("button", {}, [tab]);
    button.addEventListener("click", () => switchTab(tab));
    nav.append(button);
  }

  void restoreSession().then((restored) => {
    session = restored;
    refreshBadge();
    switchTab(session ? "Records" : "Session");
  });
}

start();
