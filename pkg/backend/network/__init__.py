# Network package: simulated WAN, Byzantine interception and the HTTP transport
