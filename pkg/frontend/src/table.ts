// Virtualized table view: pages of 50 rows through /table, which drives
// limit/offset pushdown on the engine side.

import type { ApiClient } from "./api.js";
import type { TableArtifact } from "./types.js";

export const PAGE_SIZE = 50;

export class TableView {
  readonly root: HTMLElement;
  private body: HTMLTableSectionElement;
  private status: HTMLElement;
  private offset = 0;
  private lastOffset = -1;

  constructor(
    private readonly api: ApiClient,
    private readonly artifact: TableArtifact,
  ) {
    this.root = document.createElement("div");
    this.root.className = "table-view";
    this.root.dataset.relation = artifact.relation;

    const table = document.createElement("table");
    const head = table.createTHead().insertRow();
    for (const [name, dtype] of artifact.schema) {
      const cell = document.createElement("th");
      cell.textContent = name;
      cell.title = dtype;
      head.appendChild(cell);
    }
    this.body = table.createTBody();
    this.root.appendChild(table);

    const pager = document.createElement("div");
    pager.className = "pager";
    const prev = document.createElement("button");
    prev.textContent = "prev";
    prev.addEventListener("click", () => void this.page(this.offset - PAGE_SIZE));
    const next = document.createElement("button");
    next.textContent = "next";
    next.addEventListener("click", () => void this.page(this.offset + PAGE_SIZE));
    this.status = document.createElement("span");
    pager.append(prev, this.status, next);
    this.root.appendChild(pager);
  }

  async page(offset: number): Promise<void> {
    offset = Math.max(0, Math.min(offset, Math.max(this.artifact.row_count - 1, 0)));
    // sequential scrolling gets one row group of readahead
    const sequential = this.lastOffset >= 0 && offset === this.lastOffset + PAGE_SIZE;
    const page = await this.api.tablePage(
      this.artifact.relation,
      offset,
      PAGE_SIZE,
      sequential ? 1 : 0,
    );
    this.lastOffset = this.offset;
    this.offset = offset;
    this.body.replaceChildren();
    for (const row of page.rows) {
      const tr = this.body.insertRow();
      for (const [name] of this.artifact.schema) {
        const td = tr.insertCell();
        const value = row[name];
        td.textContent = value === null || value === undefined ? "" : String(value);
      }
    }
    this.status.textContent = `${offset}-${offset + page.rows.length} of ${this.artifact.row_count}`;
  }
}
