// Transaction explorer: the eight-column ledger view, block detail, and
// in-browser Merkle proof verification against the served header root.

import {
  ApiError,
  ExplorerRowDoc,
  Session,
  getBlock,
  getProof,
  getTx,
  listTxs,
} from "../api.js";
import { hexToBytes } from "../canonical.js";
import { banner, clear, el, formatAge, shortHash } from "../dom.js";
import { verifyProof } from "../merkle.js";

const COLUMNS = ["Txn Hash", "Method", "Block", "Age", "From", "To", "Value", "Txn Fee"];

export function renderExplorer(root: HTMLElement, session: () => Session | null): {
  focusTx: (txHash: string) => void;
} {
  clear(root);
  const status = el("div");
  const tableBox = el("div", { class: "table-box" });
  const detailBox = el("div", { class: "detail-box" });
  let page = 1;

  const pageLabel = el("span", { class: "page-label" }, [`page ${page}`]);
  const prev = el("button", {}, ["◀"]);
  const next = el("button", {}, ["▶"]);
  const refresh = el("button", {}, ["Refresh"]);

  function rowElement(row: ExplorerRowDoc): HTMLElement {
    const link = el("a", { href: "#", class: "tx-link mono" }, [shortHash(row.txn_hash)]);
    link.addEventListener("click", (event) => {
      event.preventDefault();
      void showDetail(row.txn_hash);
    });
    return el("tr", {}, [
      el("td", {}, [link]),
      el("td", {}, [row.method]),
      el("td", { class: "mono" }, [String(row.block)]),
      el("td", {}, [formatAge(row.age_ms)]),
      el("td", { class: "mono" }, [shortHash(row.from)]),
      el("td", { class: "mono" }, [shortHash(row.to)]),
      el("td", {}, [row.value + " (fee-less)"]),
      el("td", {}, [row.txn_fee]),
    ]);
  }

  async function load(): Promise<void> {
    clear(status);
    clear(tableBox);
    const active = session();
    if (!active) {
      status.append(banner("error", "Import a session key first."));
      return;
    }
    try {
      const doc = await listTxs(active, page);
      pageLabel.textContent = `page ${page} · ${doc.total} transactions`;
      if (!doc.rows.length) {
        status.append(banner("info", "Nothing on this page."));
        return;
      }
      const head = el("tr", {}, COLUMNS.map((c) => el("th", {}, [c])));
      tableBox.append(el("table", { class: "grid" }, [head, ...doc.rows.map(rowElement)]));
    } catch (error) {
      const message = error instanceof ApiError ? error.message : String(error);
      status.append(banner("error", message));
    }
  }

  async function showDetail(txHash: string): Promise<void> {
    clear(detailBox);
    const active = session();
    if (!active) return;
    try {
      const { row } = await getTx(active, txHash);
      const block = await getBlock(active, row.block);
      const verifyButton = el("button", {}, ["Verify inclusion proof in this browser"]);
      const verdict = el("span", { class: "verdict" });
      verifyButton.addEventListener("click", async () => {
        verdict.textContent = "verifying…";
        try {
          const proof = await getProof(active, txHash);
          const ok = await verifyProof(
            hexToBytes(block.body_root, 32),
            hexToBytes(proof.leaf),
            proof.siblings.map((s) => ({ hash: hexToBytes(s.hash, 32), side: s.side })),
          );
          verdict.textContent = ok
            ? "✔ proof verifies against the block's body root"
            : "✘ PROOF DOES NOT VERIFY";
          verdict.className = ok ? "verdict verdict-ok" : "verdict verdict-bad";
        } catch (error) {
          verdict.textContent = `proof fetch failed: ${String(error)}`;
          verdict.className = "verdict verdict-bad";
        }
      });
      detailBox.append(
        el("h3", {}, [`Transaction ${shortHash(txHash, 26)}`]),
        el("dl", { class: "kv" }, [
          el("dt", {}, ["Method"]), el("dd", {}, [row.method]),
          el("dt", {}, ["Block height"]), el("dd", { class: "mono" }, [String(block.height)]),
          el("dt", {}, ["Block hash"]), el("dd", { class: "mono" }, [block.block_hash]),
          el("dt", {}, ["Body root"]), el("dd", { class: "mono" }, [block.body_root]),
          el("dt", {}, ["Previous block"]), el("dd", { class: "mono" }, [block.prev_hash]),
          el("dt", {}, ["Commit signatures"]), el("dd", {}, [String(block.commit_signature_count)]),
          el("dt", {}, ["Timestamp (ms)"]), el("dd", { class: "mono" }, [String(row.timestamp_ms)]),
        ]),
        el("div", {}, [verifyButton, " ", verdict]),
      );
    } catch (error) {
      const message = error instanceof ApiError ? error.message : String(error);
      detailBox.append(banner("error", message));
    }
  }

  prev.addEventListener("click", () => {
    if (page > 1) {
      page -= 1;
      void load();
    }
  });
  next.addEventListener("click", () => {
    page += 1;
    void load();
  });
  refresh.addEventListener("click", () => void load());

  root.append(
    el("h2", {}, ["Transaction explorer"]),
    el("div", { class: "toolbar" }, [prev, pageLabel, next, refresh]),
    status,
    tableBox,
    detailBox,
  );
  void load();
  return { focusTx: (txHash: string) => void showDetail(txHash) };
}
