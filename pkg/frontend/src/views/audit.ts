// Chain audit page (admin sessions): runs the server-side re-verification
// of the persisted log and surfaces the first failing height, if any.

import { ApiError, Session, auditChain } from "../api.js";
import { banner, clear, el } from "../dom.js";

export function renderAudit(root: HTMLElement, session: () => Session | null): void {
  clear(root);
  const status = el("div");
  const run = el("button", {}, ["Run chain audit"]);

  run.addEventListener("click", async () => {
    clear(status);
    const active = session();
    if (!active) {
      status.append(banner("error", "Import a session key first."));
      return;
    }
    run.setAttribute("disabled", "disabled");
    try {
      const report = await auditChain(active);
      if (report.ok) {
        status.append(banner("ok", `Audit clean: ${report.summary}`));
      } else {
        status.append(banner("error", `Audit FAILED at height ${report.failure_height}`));
        for (const violation of report.violations) {
          status.append(el("div", { class: "mono" }, [`${violation.rule}: ${violation.detail}`]));
        }
      }
    } catch (error) {
      const message = error instanceof ApiError ? error.message : String(error);
      status.append(banner("error", message));
    } finally {
      run.removeAttribute("disabled");
    }
  });

  root.append(
    el("h2", {}, ["Chain audit"]),
    el("p", {}, [
      "Re-verifies every stored block from genesis: hash linkage, body roots, and commit signatures. Admin sessions only.",
    ]),
    run,
    status,
  );
}
