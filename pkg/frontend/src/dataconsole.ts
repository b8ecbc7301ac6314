// Data console: TSV upload with per-line error reporting, export downloads.

import { ApiClient, ApiError } from "./api";

export class DataConsole {
  constructor(private root: HTMLElement, private api: ApiClient) {}

  render(): void {
    this.root.innerHTML = "";
    this.root.className = "data-console";

    const uploadSection = document.createElement("section");
    uploadSection.innerHTML = "<h2>Upload instances</h2>" +
      "<p>Tab-separated, header <code>content␉context␉meta</code>.</p>";
    const area = document.createElement("textarea");
    area.className = "upload-area";
    area.placeholder = "content\tcontext\tmeta\n…";
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = "Upload";
    const report = document.createElement("div");
    report.className = "upload-report";
    button.addEventListener("click", () => {
      this.api.upload(area.value)
        .then((result) => {
          report.innerHTML = "";
          const summary = document.createElement("p");
          summary.textContent = `inserted ${result.inserted} row(s), ` +
            `rejected ${result.rejected.length}`;
          report.append(summary);
          if (result.rejected.length > 0) {
            const list = document.createElement("ul");
            list.className = "reject-list";
            for (const reject of result.rejected) {
              const item = document.createElement("li");
              item.textContent = `line ${reject.line}: ${reject.reason}`;
              list.append(item);
            }
            report.append(list);
          }
        })
        .catch((error) => {
          report.textContent = error instanceof ApiError
            ? `${error.code}: ${error.message}` : String(error);
        });
    });
    uploadSection.append(area, button, report);

    const downloadSection = document.createElement("section");
    downloadSection.innerHTML = "<h2>Download</h2>";
    const list = document.createElement("ul");
    list.className = "download-list";
    const targets: [string, string | undefined][] = [
      ["annotation export (export.tsv)", undefined],
      ["data table", "data"],
      ["annotations table", "annotations"],
      ["users table", "users"],
      ["options table", "options"],
    ];
    for (const [label, table] of targets) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      link.textContent = label;
      link.href = this.api.exportUrl(table);
      // The export endpoint needs the bearer token; fetch and hand out a blob.
      link.addEventListener("click", (event) => {
        event.preventDefault();
        void this.download(table);
      });
      item.append(link);
      list.append(item);
    }
    downloadSection.append(list);
    this.root.append(uploadSection, downloadSection);
  }

  private async download(table?: string): Promise<void> {
    const response = await fetch(this.api.exportUrl(table), {
      headers: { Authorization: `Bearer ${this.api.token}` },
    });
    const text = await response.text();
    const blob = new Blob([text], { type: "text/tab-separated-values" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = table ? `${table}.tsv` : "export.tsv";
    link.click();
    URL.revokeObjectURL(link.href);
  }
}
