from flask import Flask
from flask_cors import CORS
from config import Config
from core.logger import configure_logging
from datetime import datetime, timezone

# Initialize app
app = Flask(__name__)
CORS(app)
app.config.from_object(Config)

# Configure logging
configure_logging()

# Import routes
from routes.design_routes import design_bp
from routes.calibration_routes import calibration_bp

# Register blueprints
app.register_blueprint(design_bp, url_prefix="/api")
app.register_blueprint(calibration_bp, url_prefix="/api")


@app.route("/")
def home():
    return {"message": "seqopt service is running"}


@app.route("/api/health", methods=["GET"])
def health_check():
    return {
        "status": "healthy",
        "version": Config.TOOL_VERSION,
        "schema": Config.SCHEMA_VERSION,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


if __name__ == "__main__":
    app.run(debug=True, port=5000, host='0.0.0.0')
